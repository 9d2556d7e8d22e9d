//! Witness assembly, randomized falsification and the certification pipeline.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gain::{apply_scaling, ActiveSet, MixingMatrix, PartitionedGain, ScalingDiagonal};
use crate::linalg::{eigenvalues, frobenius, min_symmetric_eigen, scale_columns};
use crate::squared::{all_blocks, enumerate_selections, extract_squared};
use crate::vl::{
    certify_individual_vl, check_column_dominance, CertificateMap, DominanceCheck, IndividualVl, VlOptions, VlStatus,
};
use crate::weights::{construct_weights, payoff, verify_ratios, WeightProblem, WeightSystem};
use crate::{Error, Result};

/// Eigenvalues with `Re ≤ tol·max(1, ‖M‖)` count as violations.
pub const DEFAULT_FALSIFY_TOL: f64 = -1e-9;
/// Relative tolerance on the witness spectrum and the columnwise parallelism.
pub const WITNESS_REL_TOL: f64 = 1e-9;

const WITNESS_STREAM: u64 = 1 << 63;

/// `D_sum = Σ_l γ_l M_l D_l` with its symmetric margin and spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateWitness {
    pub d_sum: DMatrix<f64>,
    /// `λ_min(D_sum + D_sumᵀ)`.
    pub lyapunov_margin: f64,
    pub spectrum: Vec<Complex<f64>>,
}

impl AggregateWitness {
    pub fn min_real_part(&self) -> f64 {
        self.spectrum.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// Positive margin and every eigenvalue with `Re > −1e-9·‖D_sum‖`.
    pub fn is_stable(&self) -> bool {
        self.lyapunov_margin > 0.0 && self.min_real_part() > -WITNESS_REL_TOL * frobenius(&self.d_sum)
    }
}

/// Sums the certified squared matrices with weights `γ`.
pub fn assemble_witness(
    a: &PartitionedGain,
    certificates: &CertificateMap,
    gammas: &WeightSystem,
) -> Result<AggregateWitness> {
    let partition = a.partition();
    let m = a.outputs();
    let mut d_sum = DMatrix::zeros(m, m);
    let mut count = 0;
    for (rank, s) in enumerate_selections(partition, &all_blocks(partition)).enumerate() {
        let gamma = *gammas.gammas().get(rank).ok_or(Error::DimensionMismatch {
            what: "weight count",
            expected: (rank + 1, 1),
            found: (gammas.len(), 1),
        })?;
        if !(gamma > 0.0) {
            return Err(Error::NonPositive { what: "weight", value: gamma });
        }
        let cert = certificates.get(&s).ok_or(Error::MissingCertificate { rank })?;
        let sq = extract_squared(a, &s)?;
        d_sum += scale_columns(&sq, cert.diagonal()) * gamma;
        count += 1;
    }
    if count != gammas.len() {
        return Err(Error::DimensionMismatch { what: "weight count", expected: (count, 1), found: (gammas.len(), 1) });
    }
    let sym = &d_sum + d_sum.transpose();
    let lyapunov_margin = min_symmetric_eigen(&sym)?.0;
    let spectrum = eigenvalues(&d_sum)?;
    Ok(AggregateWitness { d_sum, lyapunov_margin, spectrum })
}

/// Outcome of matching `A·E·K` with a weighted certificate sum.
#[derive(Debug, Clone, PartialEq)]
pub struct EkMatch {
    pub problem: WeightProblem,
    pub weights: WeightSystem,
    pub witness: AggregateWitness,
    /// `c` with `D_sum = A·E·K·diag(c)`.
    pub column_scale: Vec<f64>,
    /// `max_j ‖D_sum[:,j] − c_j (AEK)[:,j]‖ / ‖D_sum[:,j]‖`.
    pub residual: f64,
}

/// Chooses weights so that column `j` of `D_sum` is parallel to column `j` of `A·E·K`.
///
/// The factors are the certificate diagonals (`λ^j_κ = D_κ[j]`) and the
/// targets are `ε_{j,r+1}k_{j,r+1} / ε_{j,0}k_{j,0}`.
pub fn match_ek(
    a: &PartitionedGain,
    certificates: &CertificateMap,
    e: &ScalingDiagonal,
    k: &MixingMatrix,
) -> Result<EkMatch> {
    let partition = a.partition();
    let products: Vec<Vec<f64>> = e
        .to_blocks()
        .iter()
        .zip(k.to_blocks())
        .map(|(eb, kb)| eb.iter().zip(&kb).map(|(x, y)| x * y).collect())
        .collect();
    for (block, row) in products.iter().enumerate() {
        if let Some(offset) = row.iter().position(|w| !(*w > 0.0)) {
            return Err(Error::ZeroGain { block, offset });
        }
    }
    let (aek, _) = apply_scaling(a, e, k)?;

    let m = partition.blocks();
    let selections: Vec<_> = enumerate_selections(partition, &all_blocks(partition)).collect();
    let mut lambdas = alloc::vec![Vec::with_capacity(selections.len()); m];
    for (rank, s) in selections.iter().enumerate() {
        let cert = certificates.get(s).ok_or(Error::MissingCertificate { rank })?;
        for (g, col) in lambdas.iter_mut().enumerate() {
            col.push(cert.diagonal()[g]);
        }
    }
    let ratios = products.iter().map(|row| row[1..].iter().map(|w| w / row[0]).collect()).collect();
    let problem = WeightProblem::new(partition.clone(), lambdas, ratios)?;
    let weights = construct_weights(&problem, 1.0)?;
    let witness = assemble_witness(a, certificates, &weights)?;

    let mut column_scale = Vec::with_capacity(m);
    let mut residual = 0.0f64;
    for j in 0..m {
        let c = payoff(&weights, &problem, j, 0)? / products[j][0];
        let target = witness.d_sum.column(j);
        let diff = (target - aek.column(j) * c).norm();
        residual = residual.max(diff / target.norm());
        column_scale.push(c);
    }
    Ok(EkMatch { problem, weights, witness, column_scale, residual })
}

/// Random detunings: each `ε` is zero with `zero_probability`, otherwise log-uniform in `magnitude`.
///
/// Sample `i` is drawn from its own ChaCha stream, so results do not depend
/// on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampler {
    pub count: usize,
    pub zero_probability: f64,
    pub magnitude: (f64, f64),
    pub seed: u64,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler { count: 10_000, zero_probability: 0.15, magnitude: (1e-3, 1e3), seed: 42 }
    }
}

impl Sampler {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.zero_probability) {
            return Err(Error::IndexOutOfRange { what: "zero probability", index: 0, limit: 1 });
        }
        let (lo, hi) = self.magnitude;
        if !(lo > 0.0) || !lo.is_finite() {
            return Err(Error::NonPositive { what: "magnitude lower bound", value: lo });
        }
        if !(hi >= lo) || !hi.is_finite() {
            return Err(Error::NonPositive { what: "magnitude range width", value: hi - lo });
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn magnitude(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.magnitude;
        if hi == lo {
            return lo;
        }
        let t: f64 = rng.random();
        libm::exp(libm::log(lo) + t * (libm::log(hi) - libm::log(lo)))
    }

    /// Detuning for falsification sample `index`.
    pub fn draw(&self, partition: &crate::Partition, index: usize) -> ScalingDiagonal {
        let mut rng = self.rng(index as u64);
        let values = (0..partition.width())
            .map(|_| {
                let zero = rng.random::<f64>() < self.zero_probability;
                let mag = self.magnitude(&mut rng);
                if zero {
                    0.0
                } else {
                    mag
                }
            })
            .collect();
        ScalingDiagonal::from_flat(partition, values).expect("sampled values are finite and nonnegative")
    }

    /// Strictly positive detuning for witness check `index`; independent of [`Sampler::draw`].
    pub fn draw_positive(&self, partition: &crate::Partition, index: usize) -> ScalingDiagonal {
        let mut rng = self.rng(WITNESS_STREAM | index as u64);
        let values = (0..partition.width()).map(|_| self.magnitude(&mut rng)).collect();
        ScalingDiagonal::from_flat(partition, values).expect("sampled values are finite and positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// An eigenvalue with real part at or below the tolerance.
    Spectrum,
    /// Marginal spectrum with `trace ≤ 0`, so some eigenvalue has `Re ≤ 0`.
    Trace,
    /// Marginal spectrum with `det ≤ 0`, so some real eigenvalue is `≤ 0`.
    Determinant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub sample: usize,
    pub scaling: ScalingDiagonal,
    pub active: ActiveSet,
    /// Active principal block of `A·E·K`.
    pub matrix: DMatrix<f64>,
    pub eigenvalue: Complex<f64>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    /// Every product was zero; nothing to check.
    Empty,
    Clean,
    /// Leftmost eigenvalue inside the `|Re| ≤ |tol|` band without a sign witness.
    Marginal(Counterexample),
    Violation(Counterexample),
}

/// Classifies the spectrum of one reduced `A·E·K`.
pub fn classify_spectrum(matrix: &DMatrix<f64>, tol: f64) -> Result<Option<(Complex<f64>, Option<ViolationKind>)>> {
    let Some(leftmost) = crate::linalg::leftmost_eigenvalue(matrix)? else {
        return Ok(None);
    };
    let scale = frobenius(matrix).max(1.0);
    if leftmost.re <= tol * scale {
        return Ok(Some((leftmost, Some(ViolationKind::Spectrum))));
    }
    if leftmost.re <= tol.abs() * scale {
        let kind = if matrix.trace() <= 0.0 {
            Some(ViolationKind::Trace)
        } else if matrix.clone().determinant() <= 0.0 {
            Some(ViolationKind::Determinant)
        } else {
            None
        };
        return Ok(Some((leftmost, kind)));
    }
    Ok(Some((leftmost, None)))
}

/// Draws sample `index` and checks the spectrum of the reduced product.
pub fn falsify_sample(
    a: &PartitionedGain,
    k: &MixingMatrix,
    sampler: &Sampler,
    index: usize,
    tol: f64,
) -> Result<SampleOutcome> {
    let scaling = sampler.draw(a.partition(), index);
    let (matrix, active) = apply_scaling(a, &scaling, k)?;
    if active.is_empty() {
        return Ok(SampleOutcome::Empty);
    }
    let scale = frobenius(&matrix).max(1.0);
    let Some((eigenvalue, kind)) = classify_spectrum(&matrix, tol)? else {
        return Ok(SampleOutcome::Empty);
    };
    let example = |kind| Counterexample { sample: index, scaling, active, matrix, eigenvalue, kind };
    Ok(match kind {
        Some(kind) => SampleOutcome::Violation(example(kind)),
        None if eigenvalue.re <= tol.abs() * scale => SampleOutcome::Marginal(example(ViolationKind::Spectrum)),
        None => SampleOutcome::Clean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Falsification {
    /// Violation with the smallest sample index.
    pub counterexample: Option<Counterexample>,
    /// Marginal samples seen before the first violation (or in total).
    pub marginal: usize,
    pub first_marginal: Option<Counterexample>,
    /// Samples examined.
    pub samples: usize,
    pub tol: f64,
}

impl Falsification {
    /// Folds per-sample outcomes given in ascending index order, stopping at the first violation.
    pub fn from_outcomes(tol: f64, outcomes: impl IntoIterator<Item = SampleOutcome>) -> Self {
        let mut out = Falsification { counterexample: None, marginal: 0, first_marginal: None, samples: 0, tol };
        for outcome in outcomes {
            out.samples += 1;
            match outcome {
                SampleOutcome::Violation(c) => {
                    out.counterexample = Some(c);
                    break;
                }
                SampleOutcome::Marginal(c) => {
                    out.marginal += 1;
                    if out.first_marginal.is_none() {
                        out.first_marginal = Some(c);
                    }
                }
                SampleOutcome::Empty | SampleOutcome::Clean => {}
            }
        }
        out
    }
}

/// Samples detunings until the first spectrum violation or `sampler.count` samples.
pub fn falsify(a: &PartitionedGain, k: &MixingMatrix, sampler: &Sampler, tol: f64) -> Result<Falsification> {
    sampler.validate()?;
    if k.partition() != a.partition() {
        return Err(Error::PartitionMismatch { covered: k.partition().width(), columns: a.inputs() });
    }
    let mut outcomes = Vec::new();
    for i in 0..sampler.count {
        let o = falsify_sample(a, k, sampler, i, tol)?;
        let stop = matches!(o, SampleOutcome::Violation(_));
        outcomes.push(o);
        if stop {
            break;
        }
    }
    Ok(Falsification::from_outcomes(tol, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub vl: VlOptions,
    pub sampler: Sampler,
    pub falsify_tol: f64,
    /// Number of strictly positive detunings used for witness checks.
    pub witness_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            vl: VlOptions::default(),
            sampler: Sampler::default(),
            falsify_tol: DEFAULT_FALSIFY_TOL,
            witness_samples: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    /// Every squared matrix is VL-certified and sampling found no violation.
    CertifiedSufficient,
    RefutedByCounterexample,
    /// The sufficient condition failed and sampling found no violation.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCheck {
    pub sample: usize,
    pub scaling: ScalingDiagonal,
    pub residual: f64,
    pub lyapunov_margin: f64,
    pub witness_min_real: f64,
    pub witness_spectrum: Vec<Complex<f64>>,
    /// Leftmost real part of `A·E·K` computed directly.
    pub direct_min_real: f64,
    /// Largest relative payoff-ratio error of the weights.
    pub ratio_error: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

/// Observations that contradict an expectation; reported, never hidden.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// Column-dominant squared matrix the VL search did not certify.
    DominanceWithoutCertificate { rank: usize },
    /// A counterexample although every squared matrix is certified.
    CounterexampleDespiteCertificates { sample: usize },
    /// Stable witness but an unstable `A·E·K` for the same detuning.
    StableWitnessUnstableProduct { sample: usize },
    /// Witness with a nonpositive margin or a spectrum outside the right half-plane.
    UnstableWitness { sample: usize },
    /// Columnwise parallelism residual above tolerance.
    WitnessResidual { sample: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub verdict: Verdict,
    pub mixing: MixingMatrix,
    pub individual: IndividualVl,
    /// Column dominance of each squared matrix, in enumeration order.
    pub dominance: Vec<DominanceCheck>,
    pub witnesses: Vec<WitnessCheck>,
    pub falsification: Falsification,
    pub findings: Vec<Finding>,
}

impl CertifyReport {
    /// Combines precomputed certification and falsification results with witness checks.
    pub fn assemble(
        a: &PartitionedGain,
        k: &MixingMatrix,
        opts: &CertifyOptions,
        individual: IndividualVl,
        falsification: Falsification,
    ) -> Result<Self> {
        let mut findings = Vec::new();
        let mut dominance = Vec::with_capacity(individual.verdicts.len());
        for (rank, (s, v)) in individual.verdicts.iter().enumerate() {
            let d = check_column_dominance(&extract_squared(a, s)?)?;
            if d.dominant && v.status != VlStatus::Certified {
                findings.push(Finding::DominanceWithoutCertificate { rank });
            }
            dominance.push(d);
        }

        let mut witnesses = Vec::new();
        let fully_positive_k = k.as_flat().iter().all(|&g| g > 0.0);
        if let (Some(certs), true) = (individual.certificates(), fully_positive_k) {
            for sample in 0..opts.witness_samples {
                let scaling = opts.sampler.draw_positive(a.partition(), sample);
                let matched = match_ek(a, &certs, &scaling, k)?;
                let (aek, _) = apply_scaling(a, &scaling, k)?;
                let direct = crate::linalg::leftmost_eigenvalue(&aek)?.map_or(f64::INFINITY, |z| z.re);
                let stable = matched.witness.is_stable();
                if !stable {
                    findings.push(Finding::UnstableWitness { sample });
                }
                if stable && direct <= -WITNESS_REL_TOL * frobenius(&aek).max(1.0) {
                    findings.push(Finding::StableWitnessUnstableProduct { sample });
                }
                if matched.residual >= WITNESS_REL_TOL {
                    findings.push(Finding::WitnessResidual { sample, residual: matched.residual });
                }
                let gammas = matched.weights.gammas();
                witnesses.push(WitnessCheck {
                    sample,
                    residual: matched.residual,
                    lyapunov_margin: matched.witness.lyapunov_margin,
                    witness_min_real: matched.witness.min_real_part(),
                    direct_min_real: direct,
                    ratio_error: verify_ratios(&matched.weights, &matched.problem)?,
                    gamma_min: gammas.iter().copied().fold(f64::INFINITY, f64::min),
                    gamma_max: gammas.iter().copied().fold(0.0, f64::max),
                    witness_spectrum: matched.witness.spectrum,
                    scaling,
                });
            }
        }

        let certified = individual.status == VlStatus::Certified;
        let verdict = match (&falsification.counterexample, certified) {
            (Some(c), true) => {
                findings.push(Finding::CounterexampleDespiteCertificates { sample: c.sample });
                Verdict::RefutedByCounterexample
            }
            (Some(_), false) => Verdict::RefutedByCounterexample,
            (None, true) => Verdict::CertifiedSufficient,
            (None, false) => Verdict::Inconclusive,
        };
        Ok(CertifyReport { verdict, mixing: k.clone(), individual, dominance, witnesses, falsification, findings })
    }
}

/// Individual VL certification, witness checks on positive detunings, then falsification.
pub fn full_certify(a: &PartitionedGain, k: Option<&MixingMatrix>, opts: &CertifyOptions) -> Result<CertifyReport> {
    let k = k.cloned().unwrap_or_else(|| MixingMatrix::ones(a.partition()));
    let individual = certify_individual_vl(a, &opts.vl)?;
    let falsification = falsify(a, &k, &opts.sampler, opts.falsify_tol)?;
    CertifyReport::assemble(a, &k, opts, individual, falsification)
}
