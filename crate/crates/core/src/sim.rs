//! Plant with decentralized integral control: closed loop, reduced model and trajectories.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::gain::{MixingMatrix, ScalingDiagonal};
use crate::linalg::{check_finite, eigenvalues, is_hurwitz, max_real_part};
use crate::{Error, Result};

/// Fast-transient cutoff in multiples of the slowest plant time constant.
pub const QSS_TIME_CONSTANTS: f64 = 10.0;

/// State-space plant `ż = Az + Bu`, `y = Cz + Du` with Hurwitz `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantRealization {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl PlantRealization {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let q = a.nrows();
        if q == 0 {
            return Err(Error::StaticPlant);
        }
        if a.ncols() != q {
            return Err(Error::NotSquare { rows: q, cols: a.ncols() });
        }
        let n = b.ncols();
        let m = c.nrows();
        for (what, mat, shape) in [("B", &b, (q, n)), ("C", &c, (m, q)), ("D", &d, (m, n))] {
            if mat.shape() != shape {
                return Err(Error::DimensionMismatch { what, expected: shape, found: mat.shape() });
            }
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        check_finite(&c, "C")?;
        check_finite(&d, "D")?;
        if !is_hurwitz(&a)? {
            return Err(Error::NotHurwitz { max_real: max_real_part(&a)? });
        }
        Ok(PlantRealization { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// `A⁻¹X` by LU.
    fn solve_a(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.a.clone().lu().solve(x).ok_or(Error::Singular)
    }

    fn check_kbar(&self, kbar: &DMatrix<f64>) -> Result<()> {
        let shape = (self.inputs(), self.outputs());
        if kbar.shape() != shape {
            return Err(Error::DimensionMismatch { what: "controller gain", expected: shape, found: kbar.shape() });
        }
        check_finite(kbar, "controller gain")
    }
}

/// Controller gain `K̄ = E·K` (n×m).
pub fn controller_gain(e: &ScalingDiagonal, k: &MixingMatrix) -> Result<DMatrix<f64>> {
    if e.partition() != k.partition() {
        return Err(Error::PartitionMismatch { covered: e.partition().width(), columns: k.partition().width() });
    }
    Ok(e.dense() * k.dense())
}

/// `H(0) = D − C·A⁻¹·B`.
pub fn steady_state_gain(p: &PlantRealization) -> Result<DMatrix<f64>> {
    Ok(&p.d - &p.c * p.solve_a(&p.b)?)
}

/// Reduced-model matrix `−H(0)·K̄`.
pub fn reduced_matrix(p: &PlantRealization, kbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    p.check_kbar(kbar)?;
    Ok(-steady_state_gain(p)? * kbar)
}

/// Closed loop with integral states `x` (m) and plant states `z` (q).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub eta: f64,
    pub kbar: DMatrix<f64>,
    /// `[[−η·D·K̄, −η·C], [B·K̄, A]]`.
    pub matrix: DMatrix<f64>,
    outputs: usize,
}

impl ClosedLoop {
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn states(&self) -> usize {
        self.matrix.nrows() - self.outputs
    }
}

pub fn closed_loop_matrix(p: &PlantRealization, kbar: &DMatrix<f64>, eta: f64) -> Result<ClosedLoop> {
    p.check_kbar(kbar)?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Negative { what: "eta", value: eta });
    }
    let (m, q) = (p.outputs(), p.states());
    let mut matrix = DMatrix::zeros(m + q, m + q);
    matrix.view_mut((0, 0), (m, m)).copy_from(&(&p.d * kbar * -eta));
    matrix.view_mut((0, m), (m, q)).copy_from(&(&p.c * -eta));
    matrix.view_mut((m, 0), (q, m)).copy_from(&(&p.b * kbar));
    matrix.view_mut((m, m), (q, q)).copy_from(&p.a);
    Ok(ClosedLoop { eta, kbar: kbar.clone(), matrix, outputs: m })
}

/// `10^(−k/4)` for `k = 0..=16`: 1 down to 1e-4.
pub fn default_eta_grid() -> Vec<f64> {
    (0..=16).map(|k| libm::pow(10.0, -(k as f64) / 4.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPoint {
    pub eta: f64,
    pub max_real: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaSweep {
    pub points: Vec<EtaPoint>,
    /// Largest grid `η` with a Hurwitz closed loop.
    pub threshold: Option<f64>,
    /// First index of the longest stable tail of the grid.
    pub stable_suffix: Option<usize>,
    pub reduced_max_real: f64,
    pub reduced_hurwitz: bool,
    /// A stable tail exists exactly when the reduced model is Hurwitz.
    pub consistent: bool,
}

impl EtaSweep {
    /// Smallest `η` from which every smaller grid point is stable.
    pub fn suffix_eta(&self) -> Option<f64> {
        self.stable_suffix.map(|i| self.points[i].eta)
    }
}

/// Evaluates one grid point.
pub fn eta_point(p: &PlantRealization, kbar: &DMatrix<f64>, eta: f64) -> Result<EtaPoint> {
    let cl = closed_loop_matrix(p, kbar, eta)?;
    let max_real = max_real_part(&cl.matrix)?;
    let stable = is_hurwitz(&cl.matrix)?;
    Ok(EtaPoint { eta, max_real, stable })
}

/// Checks a strictly positive, strictly descending grid.
pub fn validate_eta_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty { what: "eta grid" });
    }
    if let Some(&bad) = grid.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::NonPositive { what: "eta", value: bad });
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] >= w[0]) {
        return Err(Error::IndexOutOfRange { what: "eta grid order", index: i + 1, limit: grid.len() });
    }
    Ok(())
}

/// Assembles a sweep from evaluated grid points.
pub fn summarize_sweep(p: &PlantRealization, kbar: &DMatrix<f64>, points: Vec<EtaPoint>) -> Result<EtaSweep> {
    let reduced = reduced_matrix(p, kbar)?;
    let reduced_max_real = max_real_part(&reduced)?;
    let reduced_hurwitz = is_hurwitz(&reduced)?;
    let threshold = points.iter().find(|pt| pt.stable).map(|pt| pt.eta);
    let tail = points.iter().rev().take_while(|pt| pt.stable).count();
    let stable_suffix = (tail > 0).then(|| points.len() - tail);
    let consistent = reduced_hurwitz == stable_suffix.is_some();
    Ok(EtaSweep { points, threshold, stable_suffix, reduced_max_real, reduced_hurwitz, consistent })
}

pub fn eta_threshold(p: &PlantRealization, kbar: &DMatrix<f64>, grid: &[f64]) -> Result<EtaSweep> {
    validate_eta_grid(grid)?;
    let points = grid.iter().map(|&eta| eta_point(p, kbar, eta)).collect::<Result<Vec<_>>>()?;
    summarize_sweep(p, kbar, points)
}

/// Sampled solution of the closed loop; each state is `(x, z)` stacked.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub outputs: usize,
    pub step: f64,
    /// Time at which the state stopped being finite.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn x(&self, i: usize) -> DVector<f64> {
        self.states[i].rows(0, self.outputs).into_owned()
    }

    pub fn z(&self, i: usize) -> DVector<f64> {
        let s = &self.states[i];
        s.rows(self.outputs, s.len() - self.outputs).into_owned()
    }

    /// `‖state(T)‖ / ‖state(0)‖`; zero for a zero start that stays zero.
    pub fn convergence(&self) -> f64 {
        let first = self.states[0].norm();
        let last = self.states[self.states.len() - 1].norm();
        if first == 0.0 {
            if last == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            last / first
        }
    }
}

/// `min(1e-2, 0.1/ρ)` for the closed-loop matrix.
pub fn default_step(cl: &ClosedLoop) -> Result<f64> {
    let rho = eigenvalues(&cl.matrix)?.iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0f64, f64::max);
    Ok(if rho > 0.0 { (0.1 / rho).min(1e-2) } else { 1e-2 })
}

/// Classical RK4 on `ẇ = M·w` up to `horizon`; the step is shrunk so the last sample lands on `horizon`.
pub fn simulate(
    cl: &ClosedLoop,
    x0: &DVector<f64>,
    z0: &DVector<f64>,
    horizon: f64,
    step: Option<f64>,
) -> Result<Trajectory> {
    let m = cl.outputs();
    let q = cl.states();
    if x0.len() != m {
        return Err(Error::DimensionMismatch { what: "initial x", expected: (m, 1), found: (x0.len(), 1) });
    }
    if z0.len() != q {
        return Err(Error::DimensionMismatch { what: "initial z", expected: (q, 1), found: (z0.len(), 1) });
    }
    let h = match step {
        Some(h) => h,
        None => default_step(cl)?,
    };
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositive { what: "step", value: h });
    }
    if !(horizon >= h) || !horizon.is_finite() {
        return Err(Error::NonPositive { what: "horizon minus step", value: horizon - h });
    }
    let steps = libm::ceil(horizon / h - 1e-9).max(1.0) as usize;
    let h = horizon / steps as f64;

    let mut w = DVector::zeros(m + q);
    w.rows_mut(0, m).copy_from(x0);
    w.rows_mut(m, q).copy_from(z0);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "initial state" });
    }
    let a = &cl.matrix;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(w.clone());
    let mut diverged_at = None;
    for i in 1..=steps {
        let k1 = a * &w;
        let k2 = a * (&w + &k1 * (h / 2.0));
        let k3 = a * (&w + &k2 * (h / 2.0));
        let k4 = a * (&w + &k3 * h);
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t = i as f64 * h;
        if w.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(t);
            break;
        }
        times.push(t);
        states.push(w.clone());
    }
    Ok(Trajectory { times, states, outputs: m, step: h, diverged_at })
}

/// Distance of the plant state from its quasi-steady value `−A⁻¹BK̄x` after the fast transient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiSteadyState {
    /// `10 / min |Re λ(A)|`.
    pub cutoff: f64,
    /// `max ‖z + A⁻¹BK̄x‖` over samples past the cutoff.
    pub max_deviation: f64,
    /// Same, divided by `‖x‖` at each sample.
    pub max_relative: f64,
    pub samples: usize,
}

pub fn quasi_steady_state_check(
    p: &PlantRealization,
    kbar: &DMatrix<f64>,
    traj: &Trajectory,
) -> Result<QuasiSteadyState> {
    p.check_kbar(kbar)?;
    if traj.outputs != p.outputs() || traj.states.first().map(|s| s.len()) != Some(p.outputs() + p.states()) {
        return Err(Error::DimensionMismatch {
            what: "trajectory",
            expected: (p.outputs() + p.states(), 1),
            found: (traj.states.first().map_or(0, |s| s.len()), 1),
        });
    }
    let slowest = eigenvalues(&p.a)?.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    let cutoff = QSS_TIME_CONSTANTS / slowest;
    let gain = p.solve_a(&(&p.b * kbar))?;
    let mut out = QuasiSteadyState { cutoff, max_deviation: 0.0, max_relative: 0.0, samples: 0 };
    for (i, &t) in traj.times.iter().enumerate() {
        if t <= cutoff {
            continue;
        }
        let x = traj.x(i);
        let dev = (traj.z(i) + &gain * &x).norm();
        out.max_deviation = out.max_deviation.max(dev);
        let xn = x.norm();
        if xn > 0.0 {
            out.max_relative = out.max_relative.max(dev / xn);
        }
        out.samples += 1;
    }
    Ok(out)
}
