//! Rayon-backed versions of the embarrassingly parallel loops.
//!
//! Each function returns exactly what its sequential counterpart in
//! `dstab_core` returns; results are reassembled in index order.

use anyhow::{Context, Result};
use dstab_core::dstab::{falsify_sample, Falsification, SampleOutcome, Sampler};
use dstab_core::pairing::{enumerate_assignments, evaluate_pairing, greedy_pairing, PairingRanking};
use dstab_core::sim::{eta_point, summarize_sweep, validate_eta_grid, EtaSweep, PlantRealization};
use dstab_core::squared::{all_blocks, enumerate_selections, extract_squared};
use dstab_core::vl::{check_vl, IndividualVl, VlOptions};
use dstab_core::{DMatrix, MixingMatrix, PartitionedGain};
use rayon::prelude::*;

/// Environment variable holding the worker count.
pub const THREADS_VAR: &str = "DSTAB_THREADS";

/// Samples evaluated per parallel batch before checking for a violation.
const FALSIFY_BATCH: usize = 1024;

/// Sizes the global pool from `DSTAB_THREADS`; unset or `0` keeps the rayon default.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().with_context(|| format!("{THREADS_VAR}={raw:?} is not a thread count"))?;
    if n > 0 {
        // a second initialization (e.g. from tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn certify_individual_vl(a: &PartitionedGain, opts: &VlOptions) -> Result<IndividualVl> {
    let partition = a.partition();
    let selections: Vec<_> = enumerate_selections(partition, &all_blocks(partition)).collect();
    let verdicts = selections
        .into_par_iter()
        .map(|s| {
            let m = extract_squared(a, &s)?;
            let v = check_vl(&m, opts)?;
            Ok((s, v))
        })
        .collect::<Result<Vec<_>, dstab_core::Error>>()?;
    Ok(IndividualVl::from_verdicts(verdicts))
}

pub fn falsify(a: &PartitionedGain, k: &MixingMatrix, sampler: &Sampler, tol: f64) -> Result<Falsification> {
    sampler.validate()?;
    let mut outcomes: Vec<SampleOutcome> = Vec::new();
    let mut start = 0;
    while start < sampler.count {
        let end = (start + FALSIFY_BATCH).min(sampler.count);
        let batch = (start..end)
            .into_par_iter()
            .map(|i| falsify_sample(a, k, sampler, i, tol))
            .collect::<Result<Vec<_>, dstab_core::Error>>()?;
        let hit = batch.iter().any(|o| matches!(o, SampleOutcome::Violation(_)));
        outcomes.extend(batch);
        if hit {
            break;
        }
        start = end;
    }
    Ok(Falsification::from_outcomes(tol, outcomes))
}

pub fn rank_pairings(a: &DMatrix<f64>, cap: usize, opts: &VlOptions) -> Result<PairingRanking> {
    let (m, n) = a.shape();
    let stream = enumerate_assignments(m, n, cap)?;
    let (total, truncated) = (stream.total(), stream.truncated());
    let assignments: Vec<_> = stream.collect();
    let reports = assignments
        .par_iter()
        .map(|pa| evaluate_pairing(a, pa, opts))
        .collect::<Result<Vec<_>, dstab_core::Error>>()?;
    let heuristic = if truncated { Some(greedy_pairing(a, opts)?) } else { None };
    Ok(PairingRanking::from_reports(reports, total, truncated, heuristic))
}

pub fn eta_threshold(p: &PlantRealization, kbar: &DMatrix<f64>, grid: &[f64]) -> Result<EtaSweep> {
    validate_eta_grid(grid)?;
    let points = grid.par_iter().map(|&eta| eta_point(p, kbar, eta)).collect::<Result<Vec<_>, dstab_core::Error>>()?;
    Ok(summarize_sweep(p, kbar, points)?)
}
