//! Deterministic result simulators, one per workflow result kind.
//!
//! Retention time model (fixed, documented constants):
//! `rt = clamp(0.5 + 0.8·logp_est + 0.01·mw + ε, 0.2, 30.0)` with `ε` uniform
//! in ±[`HPLC_NOISE`] keyed by `(seed, job_id)`.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

use crate::lab_model::{
    Job, JobResult, ResultKind, ResultValue, Workflow, HPLC_RETENTION_MAX, HPLC_RETENTION_MIN,
};
use crate::molecule::{molecule_info_from_smiles, parse_smiles, smiles_from_molecule_name};
use crate::util::{hash_fraction, keyed_unit, round_to};

/// Half-width of the uniform retention-time noise, in minutes.
pub const HPLC_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("missing descriptor '{0}'")]
pub struct MissingDescriptor(pub String);

/// Descriptors consumed by the HPLC model.
pub type HplcInput = BTreeMap<String, f64>;

pub fn simulate_hplc(
    descriptors: &HplcInput,
    seed: u64,
    job_id: &str,
) -> Result<JobResult, MissingDescriptor> {
    simulate_hplc_with_noise(descriptors, seed, job_id, HPLC_NOISE)
}

pub fn simulate_hplc_with_noise(
    descriptors: &HplcInput,
    seed: u64,
    job_id: &str,
    noise: f64,
) -> Result<JobResult, MissingDescriptor> {
    let get = |k: &str| {
        descriptors
            .get(k)
            .copied()
            .ok_or_else(|| MissingDescriptor(k.to_string()))
    };
    let mw = get("mw")?;
    let logp = get("logp_est")?;
    let eps = noise * (2.0 * keyed_unit(seed, job_id, "hplc") - 1.0);
    let rt = round_to(
        (0.5 + 0.8 * logp + 0.01 * mw + eps).clamp(HPLC_RETENTION_MIN, HPLC_RETENTION_MAX),
        3,
    );
    let peak_area = round_to(1e4 * (1.0 + hash_fraction(job_id)), 2);
    let mut values = BTreeMap::new();
    values.insert("retention_time_min".to_string(), ResultValue::Number(rt));
    values.insert("peak_area".to_string(), ResultValue::Number(peak_area));
    values.insert("mw".to_string(), ResultValue::Number(mw));
    values.insert("logp_est".to_string(), ResultValue::Number(logp));
    Ok(JobResult {
        kind: ResultKind::Hplc,
        values,
        summary: format!("retention time {rt:.3} min, peak area {peak_area:.0}"),
    })
}

/// Accepts a SMILES string or a compound name from the bundled table.
fn resolve_smiles(sample: &str) -> Result<String, String> {
    if parse_smiles(sample).is_ok() {
        return Ok(sample.to_string());
    }
    smiles_from_molecule_name(sample)
        .map(|m| m.smiles)
        .map_err(|e| format!("cannot resolve sample: {e}"))
}

pub(super) fn run_workflow(
    wf: &Workflow,
    job: &Job,
    seed: u64,
    noise: f64,
    now_s: f64,
) -> Result<JobResult, String> {
    let text_param = |k: &str| {
        job.parameters
            .get(k)
            .and_then(Value::as_str)
            .map(str::to_string)
    };
    match wf.result_kind {
        ResultKind::Hplc => {
            let sample = text_param("sample").ok_or("hplc job without a sample")?;
            let smiles = resolve_smiles(&sample)?;
            let info = molecule_info_from_smiles(&smiles).map_err(|e| e.to_string())?;
            let descriptors = HplcInput::from([
                ("mw".to_string(), info.mw),
                ("logp_est".to_string(), info.logp_est),
            ]);
            let mut result = simulate_hplc_with_noise(&descriptors, seed, &job.id, noise)
                .map_err(|e| e.to_string())?;
            result
                .values
                .insert("sample".into(), ResultValue::Text(sample));
            result
                .values
                .insert("smiles".into(), ResultValue::Text(smiles));
            Ok(result)
        }
        ResultKind::Synthesis => {
            let target =
                text_param("target_smiles").ok_or("synthesis job without target_smiles")?;
            let info =
                molecule_info_from_smiles(&target).map_err(|e| format!("target_smiles: {e}"))?;
            let yield_pct = round_to(40.0 + 50.0 * keyed_unit(seed, &job.id, "yield"), 1);
            let purity_pct = round_to(85.0 + 14.9 * keyed_unit(seed, &job.id, "purity"), 1);
            let mut values = BTreeMap::new();
            values.insert("yield_pct".into(), ResultValue::Number(yield_pct));
            values.insert("purity_pct".into(), ResultValue::Number(purity_pct));
            values.insert("mw".into(), ResultValue::Number(info.mw));
            values.insert("smiles".into(), ResultValue::Text(target));
            Ok(JobResult {
                kind: ResultKind::Synthesis,
                values,
                summary: format!("yield {yield_pct:.1}%, purity {purity_pct:.1}%"),
            })
        }
        ResultKind::Generic => {
            let duration = round_to(now_s - job.started_at.unwrap_or(now_s), 3);
            Ok(JobResult {
                kind: ResultKind::Generic,
                values: BTreeMap::from([("duration_s".to_string(), ResultValue::Number(duration))]),
                summary: format!("{} finished in {duration:.0} s", wf.name),
            })
        }
    }
}
