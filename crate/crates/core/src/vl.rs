//! Volterra-Lyapunov (diagonal Lyapunov) certificates.
//!
//! A square `M` is VL-stable when some positive diagonal `D` makes
//! `M·D + D·Mᵀ` positive definite. The search maximizes
//!
//! ```text
//! f(D) = λ_min(M·D + D·Mᵀ)   over   {D_i ≥ δ, Σ D_i = 1}
//! ```
//!
//! which is concave in `D`. For any unit `v` with `v` a minimal eigenvector
//! at `D`, `g_i = 2·v_i·(Mᵀv)_i` is a supergradient. The same quantity gives
//! an upper bound valid on the whole simplex: for every PSD `Y` with unit
//! trace, `max_D f(D) ≤ max_i 2·(Mᵀ·Y)_ii`. Refutations carry such a `Y`.
//!
//! Margins are compared against `tol·max|m_ij|`, so verdicts do not change
//! when `M` is multiplied by a positive constant.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::gain::PartitionedGain;
use crate::linalg::{check_finite, max_abs, min_symmetric_eigen};
use crate::squared::{all_blocks, enumerate_selections, extract_squared, Selection};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlOptions {
    /// Margin tolerance, relative to the largest absolute entry.
    pub tol: f64,
    /// Iteration budget of the ascent.
    pub budget: usize,
    /// Lower bound on every diagonal entry during the search.
    pub floor: f64,
}

impl Default for VlOptions {
    fn default() -> Self {
        VlOptions { tol: 1e-9, budget: 2000, floor: 1e-12 }
    }
}

/// Positive diagonal `D` (normalized to unit sum) with its margin `λ_min(M·D + D·Mᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VlCertificate {
    diagonal: Vec<f64>,
    margin: f64,
}

impl VlCertificate {
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Ratio of the largest to the smallest diagonal entry.
    pub fn condition(&self) -> f64 {
        condition(&self.diagonal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VlStatus {
    Certified,
    Refuted,
    Undecided,
}

/// Unit-trace PSD matrix `Y` bounding every achievable margin by `max_i 2(MᵀY)_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualWitness {
    pub weights: DMatrix<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlVerdict {
    pub status: VlStatus,
    pub certificate: Option<VlCertificate>,
    /// Best normalized margin found.
    pub best_margin: f64,
    pub best_diagonal: Vec<f64>,
    /// Smallest proven upper bound on the normalized margin.
    pub upper_bound: f64,
    /// Present when refuted.
    pub witness: Option<DualWitness>,
    pub iterations: usize,
}

impl VlVerdict {
    pub fn is_certified(&self) -> bool {
        self.status == VlStatus::Certified
    }
}

/// `M·diag(d) + diag(d)·Mᵀ`.
pub fn lyapunov_form(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let k = m.nrows();
    DMatrix::from_fn(k, k, |i, j| m[(i, j)] * d[j] + d[i] * m[(j, i)])
}

/// Smallest eigenvalue of `M·D + D·Mᵀ`; the certificate is valid iff this is positive.
pub fn verify_certificate(m: &DMatrix<f64>, d: &[f64]) -> Result<f64> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if d.len() != rows {
        return Err(Error::DimensionMismatch {
            what: "certificate diagonal",
            expected: (rows, 1),
            found: (d.len(), 1),
        });
    }
    if let Some(&bad) = d.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositive { what: "certificate diagonal", value: bad });
    }
    check_finite(m, "matrix")?;
    Ok(min_symmetric_eigen(&lyapunov_form(m, d))?.0)
}

/// Upper bound `max_i 2(MᵀY)_ii` implied by a unit-trace PSD `Y`.
pub fn dual_bound(m: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    (0..k).map(|i| 2.0 * (0..k).map(|r| m[(r, i)] * y[(r, i)]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
}

fn condition(d: &[f64]) -> f64 {
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi / lo
}

struct Search<'a> {
    m: &'a DMatrix<f64>,
    floor: f64,
    tie: f64,
    best: f64,
    best_d: Vec<f64>,
    ub: f64,
    ub_y: DMatrix<f64>,
    iterations: usize,
}

struct Probe {
    value: f64,
    vector: DVector<f64>,
    grad: Vec<f64>,
}

impl<'a> Search<'a> {
    fn new(m: &'a DMatrix<f64>, floor: f64, scale: f64) -> Self {
        let k = m.nrows();
        Search {
            m,
            floor,
            tie: 1e-12 * scale,
            best: f64::NEG_INFINITY,
            best_d: alloc::vec![1.0 / k as f64; k],
            ub: f64::INFINITY,
            ub_y: DMatrix::identity(k, k) / k as f64,
            iterations: 0,
        }
    }

    fn probe(&mut self, d: &[f64]) -> Result<Probe> {
        self.iterations += 1;
        let (value, vector) = min_symmetric_eigen(&lyapunov_form(self.m, d))?;
        let mtv = self.m.tr_mul(&vector);
        let grad: Vec<f64> = (0..d.len()).map(|i| 2.0 * vector[i] * mtv[i]).collect();
        let rank_one = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if rank_one < self.ub {
            self.ub = rank_one;
            self.ub_y = &vector * vector.transpose();
        }
        self.consider(d, value);
        Ok(Probe { value, vector, grad })
    }

    fn consider(&mut self, d: &[f64], value: f64) {
        let better =
            value > self.best + self.tie || (value >= self.best - self.tie && condition(d) < condition(&self.best_d));
        if better {
            self.best = value;
            self.best_d = d.to_vec();
        }
    }

    fn offer_dual(&mut self, y: DMatrix<f64>) {
        let trace = y.trace();
        if !(trace > 0.0) {
            return;
        }
        let y = y / trace;
        let bound = dual_bound(self.m, &y);
        if bound < self.ub {
            self.ub = bound;
            self.ub_y = y;
        }
    }

    /// Exact line search for k = 2 on `d = (t, 1 - t)` by bisection on the directional supergradient.
    fn bisect(&mut self) -> Result<()> {
        let (mut lo, mut hi) = (self.floor, 1.0 - self.floor);
        let slope = |p: &Probe| p.grad[0] - p.grad[1];
        let p_lo = self.probe(&[lo, 1.0 - lo])?;
        if slope(&p_lo) <= 0.0 {
            return Ok(());
        }
        let p_hi = self.probe(&[hi, 1.0 - hi])?;
        if slope(&p_hi) >= 0.0 {
            return Ok(());
        }
        let s_lo0 = slope(&p_lo);
        let (mut v_lo, mut s_lo) = (p_lo.vector, s_lo0);
        let s_hi0 = slope(&p_hi);
        let (mut v_hi, mut s_hi) = (p_hi.vector, s_hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let p = self.probe(&[mid, 1.0 - mid])?;
            let s = slope(&p);
            if s == 0.0 {
                return Ok(());
            }
            if s > 0.0 {
                lo = mid;
                v_lo = p.vector;
                s_lo = s;
            } else {
                hi = mid;
                v_hi = p.vector;
                s_hi = s;
            }
        }
        // convex combination of the bracketing supergradients with zero slope
        let w = -s_hi / (s_lo - s_hi);
        let y = &v_lo * v_lo.transpose() * w + &v_hi * v_hi.transpose() * (1.0 - w);
        self.offer_dual(y);
        Ok(())
    }

    /// Projected supergradient ascent with Polyak level steps; returns early on a decision.
    fn ascend(&mut self, start: Vec<f64>, budget: usize, tol: f64, scale: f64) -> Result<()> {
        let k = start.len();
        let mut d = start;
        let mut y_acc = DMatrix::zeros(k, k);
        let mut delta: Option<f64> = None;
        let mut stale = 0usize;
        let gap = 1e-10 * scale;
        for it in 0..budget {
            let before = self.best;
            let p = self.probe(&d)?;
            if self.ub <= tol || (self.best > tol && self.ub - self.best <= gap) {
                break;
            }
            let mean = p.grad.iter().sum::<f64>() / k as f64;
            let dir: Vec<f64> = p.grad.iter().map(|g| g - mean).collect();
            let norm2: f64 = dir.iter().map(|g| g * g).sum();
            if norm2 <= 1e-30 * scale * scale {
                break;
            }
            let level = *delta.get_or_insert_with(|| (0.5 * (self.ub - self.best)).max(1e-6 * scale));
            if self.best > before + 0.5 * level {
                stale = 0;
            } else {
                stale += 1;
                if stale >= 10 {
                    delta = Some((0.5 * level).max(1e-15 * scale));
                    stale = 0;
                }
            }
            let step = (self.best + delta.unwrap_or(level) - p.value) / norm2;
            y_acc += &p.vector * p.vector.transpose() * step;
            for (di, gi) in d.iter_mut().zip(&dir) {
                *di += step * gi;
            }
            project_simplex(&mut d, self.floor);
            if it % 50 == 49 {
                self.offer_dual(y_acc.clone());
            }
        }
        self.offer_dual(y_acc);
        Ok(())
    }

    /// Exhaustive grid over the 2-simplex; returns the best grid point.
    fn grid3(&mut self, resolution: usize) -> Result<Vec<f64>> {
        let mut best = (f64::NEG_INFINITY, self.best_d.clone());
        let span = 1.0 - 3.0 * self.floor;
        for i in 0..=resolution {
            for j in 0..=(resolution - i) {
                let l = resolution - i - j;
                let d = [
                    self.floor + span * i as f64 / resolution as f64,
                    self.floor + span * j as f64 / resolution as f64,
                    self.floor + span * l as f64 / resolution as f64,
                ];
                let (value, _) = min_symmetric_eigen(&lyapunov_form(self.m, &d))?;
                self.iterations += 1;
                self.consider(&d, value);
                if value > best.0 {
                    best = (value, d.to_vec());
                }
            }
        }
        Ok(best.1)
    }
}

/// Keeps `d` on `{d_i ≥ floor, Σ d_i = 1}` by Euclidean projection.
fn project_simplex(d: &mut [f64], floor: f64) {
    let k = d.len();
    let total = 1.0 - floor * k as f64;
    let mut u: Vec<f64> = d.iter().map(|v| v - floor).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        acc += uj;
        let t = (acc - total) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    for v in d.iter_mut() {
        *v = (*v - floor - theta).max(0.0) + floor;
    }
}

/// Searches for a diagonal certificate of `m`.
///
/// `Certified` when a unit-sum `D` reaches margin above `tol·max|m_ij|`;
/// `Refuted` when a dual witness bounds every unit-sum margin at or below
/// that level; `Undecided` otherwise.
pub fn check_vl(m: &DMatrix<f64>, opts: &VlOptions) -> Result<VlVerdict> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(Error::Empty { what: "matrix" });
    }
    check_finite(m, "matrix")?;
    if !(opts.tol > 0.0) {
        return Err(Error::NonPositive { what: "tolerance", value: opts.tol });
    }
    let k = rows;
    let scale = max_abs(m);
    let tol = opts.tol * scale;
    let uniform = alloc::vec![1.0 / k as f64; k];
    let mut search = Search::new(m, opts.floor, scale);
    search.probe(&uniform)?;

    match k {
        1 => {}
        2 => search.bisect()?,
        _ => {
            search.ascend(uniform, opts.budget, tol, scale)?;
            if k == 3 && search.best <= tol && search.ub > tol {
                let start = search.grid3(200)?;
                search.ascend(start, opts.budget, tol, scale)?;
            }
        }
    }

    let status = if search.best > tol {
        VlStatus::Certified
    } else if search.ub <= tol {
        VlStatus::Refuted
    } else {
        VlStatus::Undecided
    };
    let certificate = match status {
        VlStatus::Certified => {
            let margin = verify_certificate(m, &search.best_d)?;
            Some(VlCertificate { diagonal: search.best_d.clone(), margin })
        }
        _ => None,
    };
    let witness = match status {
        VlStatus::Refuted => Some(DualWitness { weights: search.ub_y.clone(), bound: search.ub }),
        _ => None,
    };
    Ok(VlVerdict {
        status,
        certificate,
        best_margin: search.best,
        best_diagonal: search.best_d,
        upper_bound: search.ub,
        witness,
        iterations: search.iterations,
    })
}

/// Column strict diagonal dominance with per-column slack `m_jj − Σ_{i≠j} |m_ij|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceCheck {
    pub dominant: bool,
    pub slacks: Vec<f64>,
}

impl DominanceCheck {
    pub fn min_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn check_column_dominance(m: &DMatrix<f64>) -> Result<DominanceCheck> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let slacks: Vec<f64> = (0..cols)
        .map(|j| {
            let off: f64 = (0..rows).filter(|&i| i != j).map(|i| m[(i, j)].abs()).sum();
            m[(j, j)] - off
        })
        .collect();
    let dominant = (0..cols).all(|j| m[(j, j)] > 0.0 && slacks[j] > 0.0);
    Ok(DominanceCheck { dominant, slacks })
}

/// One verdict per full squared matrix, in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualVl {
    pub verdicts: Vec<(Selection, VlVerdict)>,
    pub status: VlStatus,
}

impl IndividualVl {
    /// Overall status: certified iff all are, refuted if any is.
    pub fn from_verdicts(verdicts: Vec<(Selection, VlVerdict)>) -> Self {
        let status = if verdicts.iter().all(|(_, v)| v.status == VlStatus::Certified) {
            VlStatus::Certified
        } else if verdicts.iter().any(|(_, v)| v.status == VlStatus::Refuted) {
            VlStatus::Refuted
        } else {
            VlStatus::Undecided
        };
        IndividualVl { verdicts, status }
    }

    /// Certificates keyed by selection, available only when every squared matrix is certified.
    pub fn certificates(&self) -> Option<CertificateMap> {
        self.verdicts.iter().map(|(s, v)| v.certificate.clone().map(|c| (s.clone(), c))).collect()
    }

    pub fn failing(&self) -> impl Iterator<Item = &(Selection, VlVerdict)> {
        self.verdicts.iter().filter(|(_, v)| v.status != VlStatus::Certified)
    }

    /// Minimum over selections of the certified margin (or best margin when uncertified).
    pub fn min_margin(&self) -> f64 {
        self.verdicts
            .iter()
            .map(|(_, v)| v.certificate.as_ref().map_or(v.best_margin, VlCertificate::margin))
            .fold(f64::INFINITY, f64::min)
    }
}

pub type CertificateMap = alloc::collections::BTreeMap<Selection, VlCertificate>;

/// Runs [`check_vl`] on every full squared matrix of `a`.
pub fn certify_individual_vl(a: &PartitionedGain, opts: &VlOptions) -> Result<IndividualVl> {
    let partition = a.partition();
    let verdicts = enumerate_selections(partition, &all_blocks(partition))
        .map(|s| {
            let m = extract_squared(a, &s)?;
            Ok((s, check_vl(&m, opts)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndividualVl::from_verdicts(verdicts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::Partition;
    use alloc::vec;

    fn mat(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    #[test]
    fn symmetric_positive_definite_is_certified_at_uniform() {
        let v = check_vl(&mat(2, &[2.0, 1.0, 1.0, 2.0]), &VlOptions::default()).unwrap();
        assert_eq!(v.status, VlStatus::Certified);
        let c = v.certificate.unwrap();
        assert_eq!(c.diagonal(), &[0.5, 0.5]);
        assert!((c.margin() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_refuted() {
        let m = mat(2, &[0.0, 1.0, -1.0, 0.0]);
        let v = check_vl(&m, &VlOptions::default()).unwrap();
        assert_eq!(v.status, VlStatus::Refuted);
        let w = v.witness.unwrap();
        assert!(w.bound <= 1e-9);
        assert!((w.weights.trace() - 1.0).abs() < 1e-12);
        assert!((dual_bound(&m, &w.weights) - w.bound).abs() < 1e-15);
    }

    #[test]
    fn upper_triangular_needs_unequal_weights() {
        let m = mat(2, &[1.0, -3.0, 0.0, 1.0]);
        let v = check_vl(&m, &VlOptions::default()).unwrap();
        assert_eq!(v.status, VlStatus::Certified);
        // uniform weights fail here: [[2,-3],[-3,2]]/2 is indefinite
        assert!(verify_certificate(&m, &[0.5, 0.5]).unwrap() < 0.0);
        let d = v.certificate.unwrap();
        assert!(verify_certificate(&m, d.diagonal()).unwrap() > 0.0);
    }

    #[test]
    fn verify_examples() {
        let m = mat(2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((verify_certificate(&m, &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
        let m = mat(2, &[1.0, -3.0, 0.0, 1.0]);
        let expected = 4.0 - libm::sqrt(13.0);
        assert!((verify_certificate(&m, &[3.0, 1.0]).unwrap() - expected).abs() < 1e-12);
        let m = mat(2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((verify_certificate(&m, &[1.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn verify_rejects_bad_input() {
        let m = mat(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(verify_certificate(&m, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(verify_certificate(&m, &[1.0, 0.0]), Err(Error::NonPositive { .. })));
        assert!(matches!(check_vl(&mat(1, &[1.0, 2.0]), &VlOptions::default()), Err(Error::NotSquare { .. })));
        assert!(matches!(check_vl(&mat(1, &[f64::NAN]), &VlOptions::default()), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn scalar_case_is_closed_form() {
        let v = check_vl(&mat(1, &[3.0]), &VlOptions::default()).unwrap();
        assert_eq!(v.status, VlStatus::Certified);
        assert_eq!(v.certificate.unwrap().margin(), 6.0);
        assert_eq!(check_vl(&mat(1, &[-1.0]), &VlOptions::default()).unwrap().status, VlStatus::Refuted);
        assert_eq!(check_vl(&mat(1, &[0.0]), &VlOptions::default()).unwrap().status, VlStatus::Refuted);
    }

    #[test]
    fn three_by_three_cases() {
        let opts = VlOptions::default();
        let dominant = mat(3, &[4.0, 1.0, -1.0, 0.5, 3.0, 1.0, -1.0, 0.5, 5.0]);
        assert_eq!(check_vl(&dominant, &opts).unwrap().status, VlStatus::Certified);

        let mut block = DMatrix::zeros(3, 3);
        block[(0, 1)] = 1.0;
        block[(1, 0)] = -1.0;
        block[(2, 2)] = 1.0;
        assert_eq!(check_vl(&block, &opts).unwrap().status, VlStatus::Refuted);

        let negative = mat(3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(check_vl(&negative, &opts).unwrap().status, VlStatus::Refuted);
    }

    #[test]
    fn needs_skewed_diagonal_in_three_dimensions() {
        // upper triangular with large coupling: feasible only with strongly graded D
        let m = mat(3, &[1.0, -4.0, 0.0, 0.0, 1.0, -4.0, 0.0, 0.0, 1.0]);
        let v = check_vl(&m, &VlOptions::default()).unwrap();
        assert_eq!(v.status, VlStatus::Certified);
        assert!(verify_certificate(&m, v.certificate.unwrap().diagonal()).unwrap() > 0.0);
    }

    #[test]
    fn column_dominance_examples() {
        let c = check_column_dominance(&mat(2, &[3.0, 1.0, 1.0, 3.0])).unwrap();
        assert!(c.dominant);
        assert_eq!(c.slacks, vec![2.0, 2.0]);
        let c = check_column_dominance(&mat(2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(!c.dominant);
        assert_eq!(c.slacks, vec![-1.0, -1.0]);
        let c = check_column_dominance(&mat(2, &[2.0, 0.0, -1.9, 1.0])).unwrap();
        assert!(c.dominant);
        assert!((c.slacks[0] - 0.1).abs() < 1e-15 && c.slacks[1] == 1.0);
    }

    #[test]
    fn individual_certification_of_identity_blocks() {
        let a = PartitionedGain::from_row_major(
            2,
            4,
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
            Partition::new(vec![2, 2]).unwrap(),
        )
        .unwrap();
        let ind = certify_individual_vl(&a, &VlOptions::default()).unwrap();
        assert_eq!(ind.status, VlStatus::Certified);
        assert_eq!(ind.verdicts.len(), 4);
        for (_, v) in &ind.verdicts {
            assert_eq!(v.certificate.as_ref().unwrap().diagonal(), &[0.5, 0.5]);
        }
        assert_eq!(ind.certificates().unwrap().len(), 4);
    }

    #[test]
    fn individual_certification_reports_failing_selection() {
        // block 0 = {e1, e1}, block 1 = {e2, -e1}: selection (0,1) is the rotation
        let a = PartitionedGain::from_row_major(
            2,
            4,
            &[1.0, 1.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0],
            Partition::new(vec![2, 2]).unwrap(),
        )
        .unwrap();
        let ind = certify_individual_vl(&a, &VlOptions::default()).unwrap();
        assert_eq!(ind.status, VlStatus::Refuted);
        let failing: Vec<_> = ind.failing().map(|(s, _)| s.offsets().to_vec()).collect();
        assert!(failing.contains(&vec![1, 1]));
        assert!(ind.certificates().is_none());
    }

    #[test]
    fn projection_stays_feasible() {
        let mut d = vec![0.9, -0.3, 0.7];
        project_simplex(&mut d, 1e-12);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.iter().all(|&v| v >= 1e-12));
    }
}
