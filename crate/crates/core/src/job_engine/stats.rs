//! Workflow duration statistics with nearest-rank percentiles.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationStats {
    pub workflow_id: String,
    pub count: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub p50_s: f64,
    pub p90_s: f64,
}

/// The `ceil(q·n)`-th smallest value (1-based) of an ascending slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// `None` when there are no durations.
pub fn duration_stats(workflow_id: &str, durations: &[f64]) -> Option<DurationStats> {
    if durations.is_empty() {
        return None;
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(DurationStats {
        workflow_id: workflow_id.to_string(),
        count: sorted.len(),
        mean_s: sorted.iter().sum::<f64>() / sorted.len() as f64,
        min_s: sorted[0],
        max_s: sorted[sorted.len() - 1],
        p50_s: nearest_rank(&sorted, 0.5),
        p90_s: nearest_rank(&sorted, 0.9),
    })
}
