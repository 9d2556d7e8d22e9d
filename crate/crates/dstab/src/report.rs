//! Serializable reports. Indices are 1-based throughout.

use std::fmt::Write as _;

use dstab_core::dstab::{CertifyReport, Counterexample, Falsification, Finding, Verdict, ViolationKind, WitnessCheck};
use dstab_core::pairing::{PairingClass, PairingRanking, PairingReport};
use dstab_core::sim::{EtaSweep, QuasiSteadyState, Trajectory};
use dstab_core::vl::{DominanceCheck, VlStatus, VlVerdict};
use dstab_core::weights::{payoff, WeightProblem, WeightSystem};
use dstab_core::{Complex, DMatrix, Partition, Selection};
use serde::Serialize;
use serde_json::Value;

/// Top-level keys left out of the reproducibility footprint.
pub const VOLATILE_KEYS: &[&str] = &["generated_at"];

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub generated_at: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, config: RunConfig, body: T) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            config,
            body,
        }
    }
}

/// Canonical JSON of a report without its volatile keys.
pub fn footprint(report: &Value) -> String {
    let mut v = report.clone();
    if let Value::Object(map) = &mut v {
        for key in VOLATILE_KEYS {
            map.remove(*key);
        }
    }
    v.to_string()
}

/// Effective settings of a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub falsify_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplerConfig {
    pub count: usize,
    pub zero_probability: f64,
    pub magnitude: [f64; 2],
    pub seed: u64,
}

impl From<&dstab_core::dstab::Sampler> for SamplerConfig {
    fn from(s: &dstab_core::dstab::Sampler) -> Self {
        SamplerConfig {
            count: s.count,
            zero_probability: s.zero_probability,
            magnitude: [s.magnitude.0, s.magnitude.1],
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex<f64>> for ComplexValue {
    fn from(z: Complex<f64>) -> Self {
        ComplexValue { re: z.re, im: z.im }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn spectrum(z: &[Complex<f64>]) -> Vec<ComplexValue> {
    z.iter().copied().map(ComplexValue::from).collect()
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn status_name(s: VlStatus) -> &'static str {
    match s {
        VlStatus::Certified => "certified",
        VlStatus::Refuted => "refuted",
        VlStatus::Undecided => "undecided",
    }
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::CertifiedSufficient => "certified-sufficient",
        Verdict::RefutedByCounterexample => "refuted-by-counterexample",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn class_name(c: PairingClass) -> &'static str {
    match c {
        PairingClass::CertifiedSufficient => "certified-sufficient",
        PairingClass::DominanceOnly => "dominance-only",
        PairingClass::InfeasibleSufficient => "infeasible-sufficient",
        PairingClass::Refuted => "refuted",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GainInput {
    pub m: usize,
    pub n: usize,
    pub partition: Vec<usize>,
    #[serde(rename = "K_gains")]
    pub k_gains: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionEntry {
    pub rank: usize,
    /// Chosen input per block, 1-based within the block.
    pub selection: Vec<usize>,
    /// Chosen columns of `A`, 1-based.
    pub columns: Vec<usize>,
    pub status: &'static str,
    pub margin: f64,
    pub upper_bound: f64,
    pub diagonal: Vec<f64>,
    pub condition: f64,
    pub iterations: usize,
    pub column_dominant: bool,
    pub min_dominance_slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_witness: Option<Vec<Vec<f64>>>,
}

fn selection_entry(
    partition: &Partition,
    rank: usize,
    s: &Selection,
    v: &VlVerdict,
    d: &DominanceCheck,
) -> SelectionEntry {
    let columns =
        s.blocks().iter().zip(s.offsets()).map(|(&b, &o)| partition.flat_index(b, o).map_or(0, |c| c + 1)).collect();
    let diagonal = v.certificate.as_ref().map_or_else(|| v.best_diagonal.clone(), |c| c.diagonal().to_vec());
    let (lo, hi) = diagonal.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    SelectionEntry {
        rank: rank + 1,
        selection: one_based(s.offsets()),
        columns,
        status: status_name(v.status),
        margin: v.certificate.as_ref().map_or(v.best_margin, |c| c.margin()),
        upper_bound: v.upper_bound,
        condition: hi / lo,
        diagonal,
        iterations: v.iterations,
        column_dominant: d.dominant,
        min_dominance_slack: d.min_slack(),
        dual_witness: v.witness.as_ref().map(|w| rows(&w.weights)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessEntry {
    pub sample: usize,
    pub epsilons: Vec<Vec<f64>>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub ratio_error: f64,
    pub parallelism_residual: f64,
    pub lyapunov_margin: f64,
    pub witness_spectrum: Vec<ComplexValue>,
    pub witness_min_real: f64,
    pub direct_min_real: f64,
}

impl From<&WitnessCheck> for WitnessEntry {
    fn from(w: &WitnessCheck) -> Self {
        WitnessEntry {
            sample: w.sample,
            epsilons: w.scaling.to_blocks(),
            gamma_min: w.gamma_min,
            gamma_max: w.gamma_max,
            ratio_error: w.ratio_error,
            parallelism_residual: w.residual,
            lyapunov_margin: w.lyapunov_margin,
            witness_spectrum: spectrum(&w.witness_spectrum),
            witness_min_real: w.witness_min_real,
            direct_min_real: w.direct_min_real,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleEntry {
    pub sample: usize,
    pub kind: &'static str,
    pub epsilons: Vec<Vec<f64>>,
    pub active_blocks: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalue: ComplexValue,
}

impl From<&Counterexample> for CounterexampleEntry {
    fn from(c: &Counterexample) -> Self {
        CounterexampleEntry {
            sample: c.sample,
            kind: match c.kind {
                ViolationKind::Spectrum => "spectrum",
                ViolationKind::Trace => "trace",
                ViolationKind::Determinant => "determinant",
            },
            epsilons: c.scaling.to_blocks(),
            active_blocks: one_based(c.active.blocks()),
            matrix: rows(&c.matrix),
            eigenvalue: c.eigenvalue.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FalsificationEntry {
    pub tol: f64,
    pub samples: usize,
    pub marginal: usize,
    pub first_marginal: Option<CounterexampleEntry>,
    pub counterexample: Option<CounterexampleEntry>,
}

impl From<&Falsification> for FalsificationEntry {
    fn from(f: &Falsification) -> Self {
        FalsificationEntry {
            tol: f.tol,
            samples: f.samples,
            marginal: f.marginal,
            first_marginal: f.first_marginal.as_ref().map(Into::into),
            counterexample: f.counterexample.as_ref().map(Into::into),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FindingEntry {
    DominanceWithoutCertificate { rank: usize },
    CounterexampleDespiteCertificates { sample: usize },
    StableWitnessUnstableProduct { sample: usize },
    UnstableWitness { sample: usize },
    WitnessResidual { sample: usize, residual: f64 },
}

impl From<&Finding> for FindingEntry {
    fn from(f: &Finding) -> Self {
        match *f {
            Finding::DominanceWithoutCertificate { rank } => {
                FindingEntry::DominanceWithoutCertificate { rank: rank + 1 }
            }
            Finding::CounterexampleDespiteCertificates { sample } => {
                FindingEntry::CounterexampleDespiteCertificates { sample }
            }
            Finding::StableWitnessUnstableProduct { sample } => FindingEntry::StableWitnessUnstableProduct { sample },
            Finding::UnstableWitness { sample } => FindingEntry::UnstableWitness { sample },
            Finding::WitnessResidual { sample, residual } => FindingEntry::WitnessResidual { sample, residual },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyBody {
    pub input: GainInput,
    pub verdict: &'static str,
    pub vl_status: &'static str,
    pub min_margin: f64,
    pub selections: Vec<SelectionEntry>,
    pub witness_checks: Vec<WitnessEntry>,
    pub falsification: FalsificationEntry,
    pub findings: Vec<FindingEntry>,
    pub summary: String,
}

pub fn certify_body(input: GainInput, partition: &Partition, r: &CertifyReport) -> CertifyBody {
    let selections = r
        .individual
        .verdicts
        .iter()
        .zip(&r.dominance)
        .enumerate()
        .map(|(rank, ((s, v), d))| selection_entry(partition, rank, s, v, d))
        .collect();
    let mut summary = format!(
        "verdict: {}; {} of {} squared matrices certified (min margin {:.6e}); {} samples",
        verdict_name(r.verdict),
        r.individual.verdicts.iter().filter(|(_, v)| v.is_certified()).count(),
        r.individual.verdicts.len(),
        r.individual.min_margin(),
        r.falsification.samples,
    );
    if let Some(c) = &r.falsification.counterexample {
        let _ = write!(
            summary,
            "; counterexample at sample {} (eigenvalue {:.3e}{:+.3e}i)",
            c.sample, c.eigenvalue.re, c.eigenvalue.im
        );
    }
    if r.falsification.marginal > 0 {
        let _ = write!(summary, "; {} marginal samples", r.falsification.marginal);
    }
    if !r.findings.is_empty() {
        let _ = write!(summary, "; {} findings", r.findings.len());
    }
    CertifyBody {
        input,
        verdict: verdict_name(r.verdict),
        vl_status: status_name(r.individual.status),
        min_margin: r.individual.min_margin(),
        selections,
        witness_checks: r.witnesses.iter().map(Into::into).collect(),
        falsification: (&r.falsification).into(),
        findings: r.findings.iter().map(Into::into).collect(),
        summary,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FalsifyBody {
    pub input: GainInput,
    pub falsification: FalsificationEntry,
    pub summary: String,
}

pub fn falsify_body(input: GainInput, f: &Falsification) -> FalsifyBody {
    let summary = match &f.counterexample {
        Some(c) => format!("counterexample at sample {} after {} samples", c.sample, f.samples),
        None => format!("no counterexample in {} samples ({} marginal)", f.samples, f.marginal),
    };
    FalsifyBody { input, falsification: f.into(), summary }
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaEntry {
    /// Combination, 1-based per group.
    pub combination: Vec<usize>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightsBody {
    pub partition: Vec<usize>,
    pub base: f64,
    pub log_space: bool,
    pub gammas: Vec<GammaEntry>,
    /// `payoffs[group][index]`.
    pub payoffs: Vec<Vec<f64>>,
    pub ratio_error: f64,
    pub summary: String,
}

pub fn weights_body(wp: &WeightProblem, ws: &WeightSystem, ratio_error: f64) -> dstab_core::Result<WeightsBody> {
    let partition = wp.partition();
    let gammas = ws
        .gammas()
        .iter()
        .enumerate()
        .map(|(rank, &gamma)| {
            Ok(GammaEntry { combination: one_based(Selection::from_rank(partition, rank)?.offsets()), gamma })
        })
        .collect::<dstab_core::Result<Vec<_>>>()?;
    let payoffs = partition
        .sizes()
        .iter()
        .enumerate()
        .map(|(g, &p)| (0..p).map(|j| payoff(ws, wp, g, j)).collect())
        .collect::<dstab_core::Result<Vec<Vec<f64>>>>()?;
    Ok(WeightsBody {
        partition: partition.sizes().to_vec(),
        base: ws.base(),
        log_space: wp.needs_log_space(),
        summary: format!("{} positive weights; max ratio error {:.3e}", ws.len(), ratio_error),
        gammas,
        payoffs,
        ratio_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EtaEntry {
    pub eta: f64,
    pub max_real: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub points: Vec<EtaEntry>,
    pub threshold: Option<f64>,
    pub stable_suffix_from: Option<f64>,
    pub reduced_max_real: f64,
    pub reduced_hurwitz: bool,
    pub consistent: bool,
}

impl From<&EtaSweep> for SweepEntry {
    fn from(s: &EtaSweep) -> Self {
        SweepEntry {
            points: s.points.iter().map(|p| EtaEntry { eta: p.eta, max_real: p.max_real, stable: p.stable }).collect(),
            threshold: s.threshold,
            stable_suffix_from: s.suffix_eta(),
            reduced_max_real: s.reduced_max_real,
            reduced_hurwitz: s.reduced_hurwitz,
            consistent: s.consistent,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryEntry {
    pub samples: usize,
    pub step: f64,
    pub final_time: f64,
    pub convergence: f64,
    pub diverged_at: Option<f64>,
    pub final_state: Vec<f64>,
    pub quasi_steady_state: Option<QssEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QssEntry {
    pub cutoff: f64,
    pub samples: usize,
    pub max_deviation: f64,
    pub max_relative: f64,
}

impl From<&QuasiSteadyState> for QssEntry {
    fn from(q: &QuasiSteadyState) -> Self {
        QssEntry { cutoff: q.cutoff, samples: q.samples, max_deviation: q.max_deviation, max_relative: q.max_relative }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateBody {
    pub q: usize,
    pub m: usize,
    pub n: usize,
    pub steady_state_gain: Vec<Vec<f64>>,
    #[serde(rename = "Kbar")]
    pub kbar: Vec<Vec<f64>>,
    pub eta_sweep: SweepEntry,
    pub trajectory: TrajectoryEntry,
    pub summary: String,
}

pub fn sweep_summary(s: &EtaSweep) -> String {
    let grid_min = s.points.last().map_or(f64::NAN, |p| p.eta);
    if !s.reduced_hurwitz {
        format!("unstable reduced model (max Re {:.3e}); no stable grid suffix expected", s.reduced_max_real)
    } else if s.points.iter().all(|p| p.stable) {
        "stable at all grid η".to_string()
    } else {
        match s.suffix_eta() {
            Some(eta) => format!("stable for grid η ≤ {eta:.3e} (grid minimum {grid_min:.3e})"),
            None => format!("reduced model Hurwitz but no stable grid suffix down to {grid_min:.3e}"),
        }
    }
}

pub fn simulate_body(
    plant: &dstab_core::sim::PlantRealization,
    h0: &DMatrix<f64>,
    kbar: &DMatrix<f64>,
    sweep: &EtaSweep,
    traj: &Trajectory,
    qss: Option<&QuasiSteadyState>,
) -> SimulateBody {
    let last = traj.states.len() - 1;
    let mut summary = sweep_summary(sweep);
    let _ = write!(summary, "; trajectory ‖w(T)‖/‖w(0)‖ = {:.3e}", traj.convergence());
    if let Some(t) = traj.diverged_at {
        let _ = write!(summary, "; diverged at t = {t:.3e}");
    }
    SimulateBody {
        q: plant.states(),
        m: plant.outputs(),
        n: plant.inputs(),
        steady_state_gain: rows(h0),
        kbar: rows(kbar),
        eta_sweep: sweep.into(),
        trajectory: TrajectoryEntry {
            samples: traj.times.len(),
            step: traj.step,
            final_time: traj.times[last],
            convergence: traj.convergence(),
            diverged_at: traj.diverged_at,
            final_state: traj.states[last].iter().copied().collect(),
            quasi_steady_state: qss.map(Into::into),
        },
        summary,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorEntry {
    pub selection_rank: usize,
    pub rows: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairingEntry {
    pub rank: usize,
    /// Inputs (1-based) driven by each output, in output order.
    pub groups: Vec<Vec<usize>>,
    pub class: &'static str,
    pub margin: f64,
    pub vl_status: &'static str,
    pub min_dominance_slack: f64,
    pub failing_selections: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minor: Option<MinorEntry>,
}

fn pairing_entry(rank: usize, r: &PairingReport) -> PairingEntry {
    PairingEntry {
        rank,
        groups: r.assignment.groups().iter().map(|g| one_based(g)).collect(),
        class: class_name(r.class),
        margin: r.margin,
        vl_status: status_name(r.vl_status),
        min_dominance_slack: r.min_dominance_slack,
        failing_selections: r.failing.len(),
        minor: r.minor.as_ref().map(|w| MinorEntry {
            selection_rank: w.selection + 1,
            rows: one_based(&w.rows),
            value: w.value,
        }),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HeuristicEntry {
    pub label: &'static str,
    #[serde(flatten)]
    pub pairing: PairingEntry,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairBody {
    pub m: usize,
    pub n: usize,
    pub total_assignments: Option<u128>,
    pub evaluated: usize,
    pub truncated: bool,
    pub certified: usize,
    pub feasible: usize,
    pub pairings: Vec<PairingEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<HeuristicEntry>,
    pub summary: String,
}

pub fn pair_body(m: usize, n: usize, r: &PairingRanking) -> PairBody {
    let certified = r.reports.iter().filter(|p| p.class == PairingClass::CertifiedSufficient).count();
    let pairings: Vec<PairingEntry> = r.reports.iter().enumerate().map(|(i, p)| pairing_entry(i + 1, p)).collect();
    let mut summary = format!("{} of {} evaluated pairings certified", certified, r.reports.len());
    if let Some(best) = pairings.first() {
        let _ = write!(summary, "; best: {:?} ({}, margin {:.6e})", best.groups, best.class, best.margin);
    }
    if r.truncated {
        summary.push_str("; enumeration truncated, greedy heuristic attached");
    }
    PairBody {
        m,
        n,
        total_assignments: r.total,
        evaluated: r.reports.len(),
        truncated: r.truncated,
        certified,
        feasible: r.feasible().count(),
        heuristic: r.heuristic.as_ref().map(|h| HeuristicEntry { label: "heuristic", pairing: pairing_entry(0, h) }),
        pairings,
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprint_ignores_timestamp() {
        let a = serde_json::json!({"generated_at": "2026-01-01T00:00:00Z", "verdict": "x"});
        let b = serde_json::json!({"generated_at": "2027-01-01T00:00:00Z", "verdict": "x"});
        assert_eq!(footprint(&a), footprint(&b));
        let c = serde_json::json!({"generated_at": "2026-01-01T00:00:00Z", "verdict": "y"});
        assert_ne!(footprint(&a), footprint(&c));
    }
}
