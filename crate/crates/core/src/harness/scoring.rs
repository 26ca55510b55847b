//! Scoring and ranking under the challenge rules.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::entry::{EntryKind, IngestedEntry};
use crate::error::{Error, Result};
use crate::panel::PanelRow;

/// At most this many entries per team go forward to the listening panel.
pub const PANEL_ENTRIES_PER_TEAM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredError {
    pub scene_id: String,
    pub listener_id: String,
    pub predicted: f64,
    pub measured: f64,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionScore {
    pub entry_id: String,
    pub mse: f64,
    pub per_pair: Vec<SquaredError>,
}

/// Plain mean, summed in the given order.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// Unweighted mean measured SI over every (signal, listener) row.
pub fn mean_si(rows: &[PanelRow]) -> f64 {
    mean(rows.iter().map(|r| r.si_measured))
}

/// Mean squared error of predictions against the panel table, in panel
/// row order.
pub fn score_prediction(entry: &IngestedEntry, panel: &[PanelRow]) -> Result<PredictionScore> {
    let predictions = entry
        .predictions
        .as_ref()
        .ok_or_else(|| Error::Schema(format!("entry {} carries no predictions", entry.entry.entry_id)))?;
    score_prediction_table(&entry.entry.entry_id, predictions, panel)
}

pub fn score_prediction_table(
    entry_id: &str,
    predictions: &BTreeMap<(String, String), f64>,
    panel: &[PanelRow],
) -> Result<PredictionScore> {
    if panel.is_empty() {
        return Err(Error::IncompletePanel(vec!["panel table is empty".into()]));
    }
    let mut missing = Vec::new();
    let mut per_pair = Vec::with_capacity(panel.len());
    for row in panel {
        match predictions.get(&(row.scene_id.clone(), row.listener_id.clone())) {
            Some(&p) => per_pair.push(SquaredError {
                scene_id: row.scene_id.clone(),
                listener_id: row.listener_id.clone(),
                predicted: p,
                measured: row.si_measured,
                squared_error: (p - row.si_measured).powi(2),
            }),
            None => missing.push(format!("{}/{}", row.scene_id, row.listener_id)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteEntry(missing));
    }
    Ok(PredictionScore {
        entry_id: entry_id.to_string(),
        mse: mean(per_pair.iter().map(|p| p.squared_error)),
        per_pair,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub entry_id: String,
    pub team_id: String,
    pub primary_score: f64,
    pub breakdown_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub entry_id: String,
    pub team_id: String,
    pub primary_score: f64,
    pub breakdown_path: PathBuf,
    pub panel_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub challenge: EntryKind,
    pub rows: Vec<LeaderboardRow>,
}

/// Sort by primary score (mean SI descending, MSE ascending), break ties
/// by entry id, and mark each team's best two entries as panel-eligible.
pub fn rank_and_cap(challenge: EntryKind, entries: &[ScoredEntry]) -> Leaderboard {
    let mut sorted: Vec<&ScoredEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| {
        let by_score = match challenge {
            EntryKind::Enhancement => b.primary_score.total_cmp(&a.primary_score),
            EntryKind::Prediction => a.primary_score.total_cmp(&b.primary_score),
        };
        by_score.then_with(|| a.entry_id.cmp(&b.entry_id))
    });
    let mut per_team: HashMap<&str, usize> = HashMap::new();
    let rows = sorted
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let seen = per_team.entry(e.team_id.as_str()).or_default();
            *seen += 1;
            LeaderboardRow {
                rank: i + 1,
                entry_id: e.entry_id.clone(),
                team_id: e.team_id.clone(),
                primary_score: e.primary_score,
                breakdown_path: e.breakdown_path.clone(),
                panel_eligible: *seen <= PANEL_ENTRIES_PER_TEAM,
            }
        })
        .collect();
    Leaderboard { challenge, rows }
}
