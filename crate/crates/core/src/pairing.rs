//! Search over input-to-output groupings.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;

use crate::gain::{Partition, PartitionedGain};
use crate::squared::{all_blocks, enumerate_selections, extract_squared};
use crate::vl::{certify_individual_vl, check_column_dominance, VlOptions, VlStatus};
use crate::{Error, Result};

/// Default number of enumerated assignments.
pub const DEFAULT_CAP: usize = 100_000;

/// Each input assigned to exactly one output, every output receiving at least one input.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairingAssignment {
    owners: Vec<usize>,
    outputs: usize,
}

impl PairingAssignment {
    pub fn new(owners: Vec<usize>, outputs: usize) -> Result<Self> {
        if outputs == 0 {
            return Err(Error::EmptyPartition);
        }
        if let Some(&bad) = owners.iter().find(|&&o| o >= outputs) {
            return Err(Error::IndexOutOfRange { what: "output", index: bad, limit: outputs });
        }
        if owners.len() < outputs {
            return Err(Error::TooFewInputs { outputs, inputs: owners.len() });
        }
        if let Some(block) = (0..outputs).find(|b| !owners.contains(b)) {
            return Err(Error::EmptyBlock { block });
        }
        Ok(PairingAssignment { owners, outputs })
    }

    /// Output receiving each input.
    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.owners.len()
    }

    /// Inputs of each output in original column order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.outputs];
        for (input, &o) in self.owners.iter().enumerate() {
            groups[o].push(input);
        }
        groups
    }

    pub fn partition(&self) -> Partition {
        Partition::new(self.groups().iter().map(Vec::len).collect()).expect("surjective assignment")
    }

    /// Original column index for each column of the regrouped matrix.
    pub fn permutation(&self) -> Vec<usize> {
        self.groups().concat()
    }

    /// Reorders the columns of `a` into contiguous blocks.
    pub fn apply(&self, a: &DMatrix<f64>) -> Result<PartitionedGain> {
        let (m, n) = a.shape();
        if (m, n) != (self.outputs, self.inputs()) {
            return Err(Error::DimensionMismatch {
                what: "gain",
                expected: (self.outputs, self.inputs()),
                found: (m, n),
            });
        }
        let perm = self.permutation();
        let permuted = DMatrix::from_fn(m, n, |i, j| a[(i, perm[j])]);
        PartitionedGain::new(permuted, self.partition())
    }
}

/// Number of surjections from `n` inputs onto `m` outputs, `Σ_i (−1)^i C(m,i) (m−i)^n`.
pub fn surjection_count(m: usize, n: usize) -> Result<u128> {
    let mut total: i128 = 0;
    let mut binom: i128 = 1;
    for i in 0..=m {
        let base = (m - i) as i128;
        let power = (0..n).try_fold(1i128, |acc, _| acc.checked_mul(base)).ok_or(Error::Overflow)?;
        let term = binom.checked_mul(power).ok_or(Error::Overflow)?;
        total = if i % 2 == 0 { total.checked_add(term) } else { total.checked_sub(term) }.ok_or(Error::Overflow)?;
        binom = binom.checked_mul((m - i) as i128).ok_or(Error::Overflow)? / (i as i128 + 1);
    }
    u128::try_from(total).map_err(|_| Error::Overflow)
}

/// Surjective owner vectors in lexicographic order, truncated at `cap`.
#[derive(Debug, Clone)]
pub struct Assignments {
    outputs: usize,
    next: Option<Vec<usize>>,
    remaining: usize,
    total: Option<u128>,
    cap: usize,
}

impl Assignments {
    /// Exact number of surjections, `None` if it does not fit in `u128`.
    pub fn total(&self) -> Option<u128> {
        self.total
    }

    /// True when the stream stops before the last surjection.
    pub fn truncated(&self) -> bool {
        self.total.is_none_or(|t| t > self.cap as u128)
    }
}

impl Iterator for Assignments {
    type Item = PairingAssignment;

    fn next(&mut self) -> Option<PairingAssignment> {
        if self.remaining == 0 {
            return None;
        }
        let current = self.next.take()?;
        self.remaining -= 1;
        self.next = successor(&current, self.outputs);
        Some(PairingAssignment { owners: current, outputs: self.outputs })
    }
}

fn missing(prefix: &[usize], m: usize) -> usize {
    (0..m).filter(|o| !prefix.contains(o)).count()
}

/// Lexicographically smallest surjective completion of `prefix` to length `n`.
fn complete(prefix: &mut Vec<usize>, n: usize, m: usize) -> bool {
    while prefix.len() < n {
        let left = n - prefix.len() - 1;
        let Some(v) = (0..m).find(|&v| {
            prefix.push(v);
            let ok = missing(prefix, m) <= left;
            prefix.pop();
            ok
        }) else {
            return false;
        };
        prefix.push(v);
    }
    missing(prefix, m) == 0
}

fn successor(current: &[usize], m: usize) -> Option<Vec<usize>> {
    let n = current.len();
    for i in (0..n).rev() {
        for v in current[i] + 1..m {
            let mut prefix = current[..i].to_vec();
            prefix.push(v);
            if missing(&prefix, m) < n - i && complete(&mut prefix, n, m) {
                return Some(prefix);
            }
        }
    }
    None
}

pub fn enumerate_assignments(m: usize, n: usize, cap: usize) -> Result<Assignments> {
    if m == 0 {
        return Err(Error::EmptyPartition);
    }
    if n < m {
        return Err(Error::TooFewInputs { outputs: m, inputs: n });
    }
    if cap == 0 {
        return Err(Error::NonPositive { what: "cap", value: 0.0 });
    }
    let mut first = Vec::with_capacity(n);
    complete(&mut first, n, m);
    Ok(Assignments { outputs: m, next: Some(first), remaining: cap, total: surjection_count(m, n).ok(), cap })
}

/// Ordered from most to least favourable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairingClass {
    /// Every squared matrix has a diagonal Lyapunov certificate.
    CertifiedSufficient,
    /// Every squared matrix is column dominant with positive diagonal, but not all were certified.
    DominanceOnly,
    /// Neither condition holds; D-stability unresolved.
    InfeasibleSufficient,
    /// A squared matrix has a nonpositive principal minor, so no detuning-robust controller exists.
    Refuted,
}

/// Nonpositive principal minor of a squared matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorWitness {
    /// Rank of the squared matrix in enumeration order.
    pub selection: usize,
    /// Principal rows and columns (block indices).
    pub rows: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingReport {
    pub assignment: PairingAssignment,
    pub class: PairingClass,
    /// Minimum certificate margin, minimum dominance slack for dominance-only, otherwise `min(best, 0)`.
    pub margin: f64,
    pub vl_status: VlStatus,
    /// Best margin per squared matrix, in enumeration order.
    pub margins: Vec<f64>,
    pub min_dominance_slack: f64,
    /// Squared matrices without a certificate, by rank.
    pub failing: Vec<usize>,
    pub minor: Option<MinorWitness>,
}

impl PairingReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self.class, PairingClass::CertifiedSufficient | PairingClass::DominanceOnly)
    }
}

/// Relative threshold below which a principal minor counts as nonpositive.
const MINOR_REL_TOL: f64 = 1e-12;

fn nonpositive_minor(m: &DMatrix<f64>) -> Option<(Vec<usize>, f64)> {
    let k = m.nrows();
    let scale = crate::linalg::max_abs(m).max(f64::MIN_POSITIVE);
    // subsets ordered by size, then lexicographically by bitmask
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|s| (s.count_ones(), *s));
    for mask in masks {
        let rows: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(rows.len(), rows.len(), |i, j| m[(rows[i], rows[j])]);
        let value = sub.determinant();
        if value <= MINOR_REL_TOL * libm::pow(scale, rows.len() as f64) {
            return Some((rows, value));
        }
    }
    None
}

pub fn evaluate_pairing(a: &DMatrix<f64>, pa: &PairingAssignment, opts: &VlOptions) -> Result<PairingReport> {
    let gain = pa.apply(a)?;
    let individual = certify_individual_vl(&gain, opts)?;
    let partition = gain.partition();
    let mut min_dominance_slack = f64::INFINITY;
    let mut all_dominant = true;
    let mut minor = None;
    let mut failing = Vec::new();
    for (rank, (s, (_, v))) in
        enumerate_selections(partition, &all_blocks(partition)).zip(&individual.verdicts).enumerate()
    {
        let sq = extract_squared(&gain, &s)?;
        let dom = check_column_dominance(&sq)?;
        all_dominant &= dom.dominant;
        min_dominance_slack = min_dominance_slack.min(dom.min_slack());
        if v.status != VlStatus::Certified {
            failing.push(rank);
            if minor.is_none() {
                minor = nonpositive_minor(&sq).map(|(rows, value)| MinorWitness { selection: rank, rows, value });
            }
        }
    }
    let margins: Vec<f64> = individual.verdicts.iter().map(|(_, v)| v.best_margin).collect();
    let min_margin = individual.min_margin();
    let (class, margin) = if individual.status == VlStatus::Certified {
        (PairingClass::CertifiedSufficient, min_margin)
    } else if minor.is_some() {
        (PairingClass::Refuted, min_margin.min(0.0))
    } else if all_dominant {
        (PairingClass::DominanceOnly, min_dominance_slack)
    } else {
        (PairingClass::InfeasibleSufficient, min_margin.min(0.0))
    };
    Ok(PairingReport {
        assignment: pa.clone(),
        class,
        margin,
        vl_status: individual.status,
        margins,
        min_dominance_slack,
        failing,
        minor,
    })
}

/// Class, then margin descending, then owner vector.
pub fn compare_reports(a: &PairingReport, b: &PairingReport) -> Ordering {
    a.class.cmp(&b.class).then_with(|| b.margin.total_cmp(&a.margin)).then_with(|| a.assignment.cmp(&b.assignment))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingRanking {
    pub reports: Vec<PairingReport>,
    /// Exact surjection count, `None` on overflow.
    pub total: Option<u128>,
    pub truncated: bool,
    /// Greedy result, computed only when the enumeration was truncated.
    pub heuristic: Option<PairingReport>,
}

impl PairingRanking {
    pub fn from_reports(
        mut reports: Vec<PairingReport>,
        total: Option<u128>,
        truncated: bool,
        heuristic: Option<PairingReport>,
    ) -> Self {
        reports.sort_by(compare_reports);
        PairingRanking { reports, total, truncated, heuristic }
    }

    pub fn feasible(&self) -> impl Iterator<Item = &PairingReport> {
        self.reports.iter().filter(|r| r.is_feasible())
    }

    pub fn best(&self) -> Option<&PairingReport> {
        self.reports.first()
    }
}

pub fn rank_pairings(a: &DMatrix<f64>, cap: usize, opts: &VlOptions) -> Result<PairingRanking> {
    let (m, n) = a.shape();
    let stream = enumerate_assignments(m, n, cap)?;
    let (total, truncated) = (stream.total(), stream.truncated());
    let reports = stream.map(|pa| evaluate_pairing(a, &pa, opts)).collect::<Result<Vec<_>>>()?;
    let heuristic = if truncated { Some(greedy_pairing(a, opts)?) } else { None };
    Ok(PairingRanking::from_reports(reports, total, truncated, heuristic))
}

/// Heuristic: each input goes to the output with the largest `|a_ij|`, empty outputs take
/// their strongest input from a shared output, then single-input moves are accepted while
/// they improve the ranking order.
pub fn greedy_pairing(a: &DMatrix<f64>, opts: &VlOptions) -> Result<PairingReport> {
    let (m, n) = a.shape();
    if m == 0 {
        return Err(Error::EmptyPartition);
    }
    if n < m {
        return Err(Error::TooFewInputs { outputs: m, inputs: n });
    }
    let mut owners: Vec<usize> = (0..n)
        .map(|j| (0..m).max_by(|&x, &y| a[(x, j)].abs().total_cmp(&a[(y, j)].abs()).then(y.cmp(&x))).unwrap_or(0))
        .collect();
    while let Some(empty) = (0..m).find(|o| !owners.contains(o)) {
        let count = |o: usize, owners: &[usize]| owners.iter().filter(|&&x| x == o).count();
        let donor = (0..n)
            .filter(|&j| count(owners[j], &owners) > 1)
            .max_by(|&x, &y| a[(empty, x)].abs().total_cmp(&a[(empty, y)].abs()).then(y.cmp(&x)))
            .ok_or(Error::TooFewInputs { outputs: m, inputs: n })?;
        owners[donor] = empty;
    }
    let mut best = evaluate_pairing(a, &PairingAssignment::new(owners, m)?, opts)?;
    for _ in 0..n * m {
        let mut improved = false;
        for j in 0..n {
            for o in 0..m {
                let mut candidate = best.assignment.owners.clone();
                if candidate[j] == o {
                    continue;
                }
                candidate[j] = o;
                let Ok(pa) = PairingAssignment::new(candidate, m) else { continue };
                let report = evaluate_pairing(a, &pa, opts)?;
                if compare_reports(&report, &best) == Ordering::Less {
                    best = report;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}
