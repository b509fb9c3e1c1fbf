//! Density matrices, the Haar-rotated hard instance, finite-outcome POVMs and
//! measurement simulation for nonadaptive and adaptive schedules.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};
use crate::haar::haar_unitary;
use crate::matrix::{Hermitian, Matrix};
use crate::rng::{RngSeed, StreamRng};
use crate::scalar::Real;

pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;
/// Negative outcome probabilities above `-CLAMP_TOL` are rounding noise.
pub const CLAMP_TOL: f64 = 1e-12;
/// Largest tolerated deviation of `Σ_x Tr(ρ M_x)` from one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

/// Trace-one positive semidefinite Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real = f64> {
    h: Hermitian<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(h: Hermitian<T>) -> Result<Self> {
        let tr = h.trace();
        ensure_arg!(
            (tr - T::one()).abs() <= T::tol(TRACE_TOL),
            "density matrix trace is {}, expected 1",
            tr.as_f64()
        );
        let min = h.eigh()?.eigenvalues.first().copied().unwrap_or(T::zero());
        ensure_arg!(min >= -T::tol(PSD_TOL), "density matrix has negative eigenvalue {}", min.as_f64());
        Ok(DensityMatrix { h })
    }

    /// `I/d`.
    pub fn maximally_mixed(d: usize) -> Self {
        assert!(d >= 1, "dimension must be positive");
        DensityMatrix { h: Hermitian::identity(d).scale(T::one() / T::lit(d as f64)) }
    }

    /// `v v† / ‖v‖²`.
    pub fn pure(v: &[Complex<T>]) -> Result<Self> {
        let n2: T = v.iter().map(|z| z.norm_sqr()).sum();
        ensure_arg!(n2 > T::zero(), "zero vector is not a state");
        Ok(DensityMatrix { h: Hermitian::outer(v).scale(T::one() / n2) })
    }

    pub fn hermitian(&self) -> &Hermitian<T> {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Unnormalized trace distance `‖self − other‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<T> {
        self.h.sub(&other.h)?.trace_norm()
    }
}

/// The `±ε` diagonal: first `d/2` entries `+ε`, last `d/2` entries `−ε`.
pub fn signed_diagonal<T: Real>(d: usize, eps: T) -> Result<Vec<T>> {
    ensure_arg!(d >= 2 && d % 2 == 0, "hard instance needs an even dimension, got {d}");
    Ok((0..d).map(|i| if i < d / 2 { eps } else { -eps }).collect())
}

/// The Haar-rotated alternative: `U† Λ U` with `Λ = (I + X)/d`.
#[derive(Clone, Debug)]
pub struct HardInstance<T: Real = f64> {
    pub d: usize,
    pub eps: T,
    pub u: Matrix<T>,
    pub lambda: Hermitian<T>,
}

impl<T: Real> HardInstance<T> {
    pub fn new(d: usize, eps: T, u: Matrix<T>) -> Result<Self> {
        ensure_arg!(eps > T::zero() && eps <= T::one(), "eps must lie in (0, 1], got {}", eps.as_f64());
        let x = signed_diagonal(d, eps)?;
        ensure_arg!(u.dim() == d, "unitary has dimension {}, expected {d}", u.dim());
        ensure_arg!(u.unitarity_defect() <= T::tol(UNITARY_TOL), "U is not unitary");
        let inv_d = T::one() / T::lit(d as f64);
        let diag: Vec<T> = x.iter().map(|&xi| (T::one() + xi) * inv_d).collect();
        Ok(HardInstance { d, eps, u, lambda: Hermitian::from_real_diagonal(&diag) })
    }

    pub fn sample<R: Rng + ?Sized>(d: usize, eps: T, rng: &mut R) -> Result<Self> {
        ensure_arg!(d >= 2 && d % 2 == 0, "hard instance needs an even dimension, got {d}");
        Self::new(d, eps, haar_unitary(d, rng))
    }

    pub fn state(&self) -> Result<DensityMatrix<T>> {
        DensityMatrix::new(self.lambda.conjugate_by(&self.u)?)
    }
}

/// `U† Λ U`; errors on odd `d`, `eps ∉ (0, 1]` or non-unitary `U`.
pub fn hard_instance_state<T: Real>(d: usize, eps: T, u: &Matrix<T>) -> Result<DensityMatrix<T>> {
    HardInstance::new(d, eps, u.clone())?.state()
}

/// A finite-outcome POVM `{M_x}` with `Σ M_x = I`.
#[derive(Clone)]
pub struct Povm<T: Real = f64> {
    d: usize,
    elements: Vec<Hermitian<T>>,
    traces: Vec<T>,
    normalized: Vec<Hermitian<T>>,
    /// Unit vectors `u_x` with `M̂_x = u_x u_x†`, when every element is rank one.
    rank_one: Option<Vec<Vec<Complex<T>>>>,
    diagonal: bool,
}

impl<T: Real> fmt::Debug for Povm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Povm")
            .field("d", &self.d)
            .field("outcomes", &self.elements.len())
            .field("rank_one", &self.rank_one.is_some())
            .field("diagonal", &self.diagonal)
            .finish()
    }
}

impl<T: Real> Povm<T> {
    /// Validates completeness (1e-9 entrywise), positivity and nonzero traces.
    pub fn new(elements: Vec<Hermitian<T>>) -> Result<Self> {
        ensure_arg!(!elements.is_empty(), "a POVM needs at least one outcome");
        let d = elements[0].dim();
        ensure_arg!(elements.iter().all(|m| m.dim() == d), "POVM elements differ in dimension");
        for (x, m) in elements.iter().enumerate() {
            ensure_arg!(m.trace() > T::zero(), "POVM element {x} has non-positive trace");
            let min = m.eigh()?.eigenvalues[0];
            ensure_arg!(min >= -T::tol(PSD_TOL), "POVM element {x} is not PSD (min eigenvalue {})", min.as_f64());
        }
        let mut sum = Matrix::<T>::zeros(d);
        for m in &elements {
            sum = &sum + m.matrix();
        }
        let defect = sum.max_abs_diff(&Matrix::identity(d));
        ensure_arg!(
            defect <= T::tol(COMPLETENESS_TOL),
            "POVM elements sum to identity only within {:e}",
            defect.as_f64()
        );
        Ok(Self::assemble(d, elements, None))
    }

    fn assemble(d: usize, elements: Vec<Hermitian<T>>, rank_one: Option<Vec<Vec<Complex<T>>>>) -> Self {
        let traces: Vec<T> = elements.iter().map(Hermitian::trace).collect();
        let normalized = elements.iter().zip(&traces).map(|(m, &t)| m.scale(T::one() / t)).collect();
        let diagonal = elements.iter().all(Hermitian::is_diagonal);
        Povm { d, elements, traces, normalized, rank_one, diagonal }
    }

    /// Computational basis projectors.
    pub fn standard_basis(d: usize) -> Self {
        basis_povm(&Matrix::identity(d)).expect("identity is unitary")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn num_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn element(&self, x: usize) -> &Hermitian<T> {
        &self.elements[x]
    }

    pub fn elements(&self) -> &[Hermitian<T>] {
        &self.elements
    }

    /// `M̂_x = M_x / Tr(M_x)`.
    pub fn normalized(&self, x: usize) -> &Hermitian<T> {
        &self.normalized[x]
    }

    pub fn traces(&self) -> &[T] {
        &self.traces
    }

    pub fn rank_one_vectors(&self) -> Option<&[Vec<Complex<T>>]> {
        self.rank_one.as_deref()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Outcome law under `ρ_mm`: `Tr(M_x)/d`.
    pub fn null_distribution(&self) -> Vec<T> {
        let inv_d = T::one() / T::lit(self.d as f64);
        self.traces.iter().map(|&t| t * inv_d).collect()
    }

    pub fn to_files(&self) -> Vec<crate::matrix::MatrixFile> {
        self.elements.iter().map(|m| m.matrix().to_file()).collect()
    }

    /// Reads a JSON array of matrices in the matrix file format.
    pub fn from_json(s: &str) -> Result<Self> {
        let files: Vec<crate::matrix::MatrixFile> =
            serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        let elements = files
            .iter()
            .map(|f| Hermitian::new(Matrix::from_file(f)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements)
    }
}

/// Rank-one POVM `{|U_i⟩⟨U_i|}` from the columns of a unitary.
pub fn basis_povm<T: Real>(u: &Matrix<T>) -> Result<Povm<T>> {
    let d = u.dim();
    ensure_arg!(d >= 1, "empty matrix");
    ensure_arg!(u.unitarity_defect() <= T::tol(UNITARY_TOL), "basis matrix is not unitary");
    let columns: Vec<Vec<Complex<T>>> = (0..d).map(|j| u.column(j)).collect();
    let elements = columns.iter().map(|c| Hermitian::outer(c)).collect();
    Ok(Povm::assemble(d, elements, Some(columns)))
}

/// Random full-rank `m`-outcome POVM: `M_x = S^{-1/2} G_x G_x† S^{-1/2}` with
/// Ginibre `G_x` and `S = Σ_x G_x G_x†`.
pub fn random_povm<T: Real, R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Result<Povm<T>> {
    ensure_arg!(d >= 1 && m >= 1, "random POVM needs d ≥ 1 and m ≥ 1");
    let raw: Vec<Matrix<T>> = (0..m)
        .map(|_| {
            let g = crate::haar::ginibre::<T, R>(d, rng);
            &g * &g.adjoint()
        })
        .collect();
    let mut s = Matrix::<T>::zeros(d);
    for a in &raw {
        s = &s + a;
    }
    let eig = Hermitian::symmetrized(s).eigh()?;
    let inv_sqrt: Vec<T> = eig.eigenvalues.iter().map(|&l| T::one() / l.sqrt()).collect();
    let v = &eig.eigenvectors;
    let w = &(v * &Matrix::from_real_diagonal(&inv_sqrt)) * &v.adjoint();
    let elements = raw.iter().map(|a| Hermitian::symmetrized(&(&w * a) * &w)).collect();
    Povm::new(elements)
}

/// `q_x = Tr(ρ M_x)`, with rounding-level negatives clamped and the result renormalized.
pub fn outcome_distribution<T: Real>(rho: &DensityMatrix<T>, povm: &Povm<T>) -> Result<Vec<T>> {
    ensure_arg!(
        rho.dim() == povm.dim(),
        "state has dimension {}, POVM has {}",
        rho.dim(),
        povm.dim()
    );
    let mut q = Vec::with_capacity(povm.num_outcomes());
    for (x, m) in povm.elements().iter().enumerate() {
        let p = rho.hermitian().inner_product(m)?;
        if p < T::zero() {
            if p < -T::lit(CLAMP_TOL) {
                return Err(Error::Consistency(format!("outcome {x} has probability {}", p.as_f64())));
            }
            q.push(T::zero());
        } else {
            q.push(p);
        }
    }
    let total: T = q.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(PROBABILITY_SUM_TOL) {
        return Err(Error::Consistency(format!("outcome probabilities sum to {}", total.as_f64())));
    }
    Ok(q.into_iter().map(|p| p / total).collect())
}

/// Inverse-CDF sampler over a finite probability vector.
#[derive(Clone, Debug)]
pub struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    pub fn new<T: Real>(probs: &[T]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p.as_f64();
                acc
            })
            .collect();
        Categorical { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("nonempty distribution");
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        // Skip zero-probability cells that share the boundary.
        i.min(self.cdf.len() - 1)
    }
}

/// `n` i.i.d. outcomes of measuring `rho` with `povm`.
pub fn sample_outcomes<T: Real, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    povm: &Povm<T>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let cat = Categorical::new(&outcome_distribution(rho, povm)?);
    Ok((0..n).map(|_| cat.sample(rng)).collect())
}

/// Outcomes together with the POVMs that produced them.
#[derive(Clone, Debug)]
pub struct Transcript<T: Real = f64> {
    pub outcomes: Vec<usize>,
    /// Index into `povms` for every step.
    pub povm_ids: Vec<usize>,
    pub povms: Vec<Arc<Povm<T>>>,
}

impl<T: Real> Default for Transcript<T> {
    fn default() -> Self {
        Transcript { outcomes: Vec::new(), povm_ids: Vec::new(), povms: Vec::new() }
    }
}

impl<T: Real> Transcript<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Transcript measured entirely with one POVM.
    pub fn with_single_povm(povm: Arc<Povm<T>>, outcomes: Vec<usize>) -> Result<Self> {
        let mut t = Self::new();
        for x in outcomes {
            t.push(povm.clone(), x)?;
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn push(&mut self, povm: Arc<Povm<T>>, outcome: usize) -> Result<()> {
        ensure_arg!(outcome < povm.num_outcomes(), "outcome {outcome} out of range");
        let id = match self.povms.iter().position(|p| Arc::ptr_eq(p, &povm)) {
            Some(id) => id,
            None => {
                self.povms.push(povm);
                self.povms.len() - 1
            }
        };
        self.povm_ids.push(id);
        self.outcomes.push(outcome);
        Ok(())
    }

    pub fn povm_at(&self, step: usize) -> &Arc<Povm<T>> {
        &self.povms[self.povm_ids[step]]
    }

    /// The first `len` steps.
    pub fn prefix(&self, len: usize) -> Self {
        let mut t = Self::new();
        for i in 0..len.min(self.len()) {
            t.push(self.povm_at(i).clone(), self.outcomes[i]).expect("valid prefix");
        }
        t
    }
}

/// One line of the transcript export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub trial: usize,
    pub outcomes: Vec<usize>,
    pub povm: String,
}

/// Chooses the next POVM from the history. Any randomness comes from `rng`.
pub trait AdaptiveStrategy<T: Real = f64>: Send + Sync {
    fn name(&self) -> &str;
    fn choose(&self, history: &Transcript<T>, rng: &mut StreamRng) -> Result<Arc<Povm<T>>>;
}

/// Measurement schedule: a fixed sequence (repeated cyclically) or an adaptive strategy.
#[derive(Clone)]
pub enum MeasurementSchedule<T: Real = f64> {
    Nonadaptive(Vec<Arc<Povm<T>>>),
    Adaptive(Arc<dyn AdaptiveStrategy<T>>),
}

impl<T: Real> fmt::Debug for MeasurementSchedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementSchedule::Nonadaptive(p) => write!(f, "Nonadaptive({} POVMs)", p.len()),
            MeasurementSchedule::Adaptive(s) => write!(f, "Adaptive({})", s.name()),
        }
    }
}

impl<T: Real> MeasurementSchedule<T> {
    pub fn repeated(povm: Povm<T>) -> Self {
        MeasurementSchedule::Nonadaptive(vec![Arc::new(povm)])
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, MeasurementSchedule::Adaptive(_))
    }

    fn next_povm(&self, history: &Transcript<T>, rng: &mut StreamRng, d: usize) -> Result<Arc<Povm<T>>> {
        let povm = match self {
            MeasurementSchedule::Nonadaptive(seq) => {
                ensure_arg!(!seq.is_empty(), "empty nonadaptive schedule");
                seq[history.len() % seq.len()].clone()
            }
            MeasurementSchedule::Adaptive(s) => s.choose(history, rng)?,
        };
        if povm.dim() != d {
            return Err(Error::Consistency(format!(
                "schedule produced a POVM of dimension {}, state has {d}",
                povm.dim()
            )));
        }
        Ok(povm)
    }
}

/// Always the same POVM, expressed as an adaptive strategy.
pub struct FixedBasis<T: Real = f64>(pub Arc<Povm<T>>);

impl<T: Real> AdaptiveStrategy<T> for FixedBasis<T> {
    fn name(&self) -> &str {
        "fixed"
    }
    fn choose(&self, _history: &Transcript<T>, _rng: &mut StreamRng) -> Result<Arc<Povm<T>>> {
        Ok(self.0.clone())
    }
}

/// A new Haar-random basis at every step.
pub struct FreshHaar {
    pub d: usize,
}

impl<T: Real> AdaptiveStrategy<T> for FreshHaar {
    fn name(&self) -> &str {
        "fresh-haar"
    }
    fn choose(&self, _history: &Transcript<T>, rng: &mut StreamRng) -> Result<Arc<Povm<T>>> {
        Ok(Arc::new(basis_povm(&haar_unitary(self.d, rng))?))
    }
}

/// Measures in the eigenbasis of the running estimate `(I + Σ_i M̂_{x_i}) / (d + t)`.
///
/// The first step uses a Haar-random basis; a transcript recorded in a single
/// fixed basis would otherwise never leave it.
pub struct GreedyRealign {
    pub d: usize,
}

impl<T: Real> AdaptiveStrategy<T> for GreedyRealign {
    fn name(&self) -> &str {
        "greedy-realign"
    }
    fn choose(&self, history: &Transcript<T>, rng: &mut StreamRng) -> Result<Arc<Povm<T>>> {
        if history.is_empty() {
            return Ok(Arc::new(basis_povm(&haar_unitary(self.d, rng))?));
        }
        let mut acc = Hermitian::<T>::identity(self.d);
        for (i, &x) in history.outcomes.iter().enumerate() {
            acc = acc.add(history.povm_at(i).normalized(x))?;
        }
        let estimate = acc.scale(T::one() / T::lit((self.d + history.len()) as f64));
        Ok(Arc::new(basis_povm(&estimate.eigh()?.eigenvectors)?))
    }
}

/// Named schedule families exposed to the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Fixed,
    FreshHaar,
    GreedyRealign,
}

impl ScheduleKind {
    pub fn label(self) -> &'static str {
        match self {
            ScheduleKind::Fixed => "fixed",
            ScheduleKind::FreshHaar => "fresh-haar",
            ScheduleKind::GreedyRealign => "greedy-realign",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed" | "fixed-basis" => Ok(ScheduleKind::Fixed),
            "fresh-haar" => Ok(ScheduleKind::FreshHaar),
            "greedy-realign" => Ok(ScheduleKind::GreedyRealign),
            other => Err(Error::Argument(format!("unknown schedule '{other}'"))),
        }
    }

    /// `Fixed` measures every copy in the computational basis.
    pub fn build<T: Real>(self, d: usize) -> MeasurementSchedule<T> {
        match self {
            ScheduleKind::Fixed => MeasurementSchedule::repeated(Povm::standard_basis(d)),
            ScheduleKind::FreshHaar => MeasurementSchedule::Adaptive(Arc::new(FreshHaar { d })),
            ScheduleKind::GreedyRealign => MeasurementSchedule::Adaptive(Arc::new(GreedyRealign { d })),
        }
    }
}

/// What is being measured in a run.
#[derive(Clone, Debug)]
pub enum StateSource<T: Real = f64> {
    /// One fixed state for every copy (the null run uses `ρ_mm`).
    Fixed(DensityMatrix<T>),
    /// A fresh hard instance `U† Λ U` per run, held fixed across its copies.
    HardInstance { d: usize, eps: T },
}

impl<T: Real> StateSource<T> {
    pub fn dim(&self) -> usize {
        match self {
            StateSource::Fixed(rho) => rho.dim(),
            StateSource::HardInstance { d, .. } => *d,
        }
    }
}

/// A run's transcript and the POVM the schedule would use for the next copy.
#[derive(Clone, Debug)]
pub struct ScheduleRun<T: Real = f64> {
    pub transcript: Transcript<T>,
    pub next_povm: Arc<Povm<T>>,
}

const STATE_STREAM: u64 = 0;
const STRATEGY_STREAM: u64 = 1;
const OUTCOME_STREAM: u64 = 2;

/// Measures `n` copies following `schedule`.
///
/// The seed is split into three streams (state sampling, strategy randomness,
/// outcome sampling), so a strategy that ignores its history reproduces the
/// equivalent nonadaptive run exactly.
pub fn run_schedule<T: Real>(
    source: &StateSource<T>,
    schedule: &MeasurementSchedule<T>,
    n: usize,
    seed: RngSeed,
) -> Result<Transcript<T>> {
    Ok(run_schedule_with_next(source, schedule, n, seed)?.transcript)
}

pub fn run_schedule_with_next<T: Real>(
    source: &StateSource<T>,
    schedule: &MeasurementSchedule<T>,
    n: usize,
    seed: RngSeed,
) -> Result<ScheduleRun<T>> {
    let d = source.dim();
    let rho = match source {
        StateSource::Fixed(rho) => rho.clone(),
        StateSource::HardInstance { d, eps } => {
            HardInstance::sample(*d, *eps, &mut seed.derive(STATE_STREAM).rng())?.state()?
        }
    };
    let mut strategy_rng = seed.derive(STRATEGY_STREAM).rng();
    let mut outcome_rng = seed.derive(OUTCOME_STREAM).rng();
    let mut transcript = Transcript::new();
    let mut cached: Option<(Arc<Povm<T>>, Categorical)> = None;
    for _ in 0..n {
        let povm = schedule.next_povm(&transcript, &mut strategy_rng, d)?;
        let cat = match &cached {
            Some((p, c)) if Arc::ptr_eq(p, &povm) => c.clone(),
            _ => {
                let c = Categorical::new(&outcome_distribution(&rho, &povm)?);
                cached = Some((povm.clone(), c.clone()));
                c
            }
        };
        let x = cat.sample(&mut outcome_rng);
        transcript.push(povm, x)?;
    }
    let next_povm = schedule.next_povm(&transcript, &mut strategy_rng, d)?;
    Ok(ScheduleRun { transcript, next_povm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use proptest::prelude::*;

    fn e(k: usize, d: usize) -> Vec<Complex<f64>> {
        (0..d).map(|i| Complex::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect()
    }

    #[test]
    fn maximally_mixed_examples() {
        let rho = DensityMatrix::<f64>::maximally_mixed(2);
        assert_eq!(rho.hermitian().matrix()[(0, 0)].re, 0.5);
        assert_eq!(rho.hermitian().matrix()[(1, 1)].re, 0.5);
        assert!((rho.hermitian().trace() - 1.0).abs() < 1e-15);
        assert_eq!(rho.trace_distance(&rho).unwrap(), 0.0);
    }

    #[test]
    fn hard_instance_identity_rotation() {
        let rho = hard_instance_state(4, 0.5, &Matrix::identity(4)).unwrap();
        let diag: Vec<f64> = rho.hermitian().matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![0.375, 0.375, 0.125, 0.125]);
    }

    #[test]
    fn hard_instance_distance_and_spectrum() {
        let mut rng = RngSeed(17).rng();
        for &(d, eps) in &[(2usize, 1.0f64), (6, 0.3), (16, 0.5)] {
            let inst = HardInstance::sample(d, eps, &mut rng).unwrap();
            let rho = inst.state().unwrap();
            let mm = DensityMatrix::maximally_mixed(d);
            assert!((rho.trace_distance(&mm).unwrap() - eps).abs() <= 1e-10);
            let ev = rho.hermitian().eigh().unwrap().eigenvalues;
            for (i, l) in ev.iter().enumerate() {
                let want = if i < d / 2 { (1.0 - eps) / d as f64 } else { (1.0 + eps) / d as f64 };
                assert!((l - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn hard_instance_argument_errors() {
        let u = Matrix::<f64>::identity(3);
        assert!(hard_instance_state(3, 0.5, &u).is_err());
        let u = Matrix::<f64>::identity(4);
        assert!(hard_instance_state(4, 0.0, &u).is_err());
        assert!(hard_instance_state(4, 1.5, &u).is_err());
        assert!(hard_instance_state(4, 0.5, &u.scale(2.0)).is_err());
    }

    #[test]
    fn basis_povm_properties() {
        let std = Povm::<f64>::standard_basis(3);
        for x in 0..3 {
            assert_eq!(std.element(x).matrix(), &Matrix::outer(&e(x, 3)));
        }
        let u = haar_unitary::<f64, _>(5, &mut RngSeed(3).rng());
        let p = basis_povm(&u).unwrap();
        let mut sum = Matrix::zeros(5);
        for m in p.elements() {
            sum = &sum + m.matrix();
            assert!((m.trace() - 1.0).abs() <= 1e-12);
            let ev = m.eigh().unwrap().eigenvalues;
            assert!(ev[ev.len() - 2].abs() <= 1e-10);
        }
        assert!(sum.max_abs_diff(&Matrix::identity(5)) <= 1e-10);
        assert!(basis_povm(&Matrix::<f64>::identity(3).scale(1.1)).is_err());
    }

    #[test]
    fn povm_validation() {
        let half = Hermitian::<f64>::identity(2).scale(0.5);
        assert!(Povm::new(vec![half.clone(), half.clone()]).is_ok());
        assert!(Povm::new(vec![half.clone()]).is_err());
        let neg = Hermitian::from_real_diagonal(&[1.5, 0.5]);
        let comp = Hermitian::from_real_diagonal(&[-0.5, 0.5]);
        assert!(Povm::new(vec![neg, comp]).is_err());
    }

    #[test]
    fn povm_json_round_trip() {
        let p = Povm::<f64>::standard_basis(2);
        let json = serde_json::to_string(&p.to_files()).unwrap();
        let back = Povm::<f64>::from_json(&json).unwrap();
        assert_eq!(back.num_outcomes(), 2);
        assert_eq!(back.element(1), p.element(1));
    }

    #[test]
    fn outcome_distribution_examples() {
        let mut rng = RngSeed(4).rng();
        let mm = DensityMatrix::<f64>::maximally_mixed(6);
        let p = basis_povm(&haar_unitary(6, &mut rng)).unwrap();
        for q in outcome_distribution(&mm, &p).unwrap() {
            assert!((q - 1.0 / 6.0).abs() < 1e-12);
        }
        let lambda = hard_instance_state(2, 0.5f64, &Matrix::identity(2)).unwrap();
        let q = outcome_distribution(&lambda, &Povm::standard_basis(2)).unwrap();
        assert!((q[0] - 0.75).abs() < 1e-15 && (q[1] - 0.25).abs() < 1e-15);
        let pure = DensityMatrix::pure(&e(0, 4)).unwrap();
        assert_eq!(outcome_distribution(&pure, &Povm::standard_basis(4)).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(outcome_distribution(&pure, &Povm::standard_basis(3)).is_err());
    }

    #[test]
    fn sampling_examples() {
        let mut rng = RngSeed(12).rng();
        let pure = DensityMatrix::pure(&e(2, 4)).unwrap();
        let std = Povm::standard_basis(4);
        assert!(sample_outcomes(&pure, &std, 0, &mut rng).unwrap().is_empty());
        assert!(sample_outcomes(&pure, &std, 50, &mut rng).unwrap().iter().all(|&x| x == 2));

        let lambda = hard_instance_state(4, 0.6, &Matrix::identity(4)).unwrap();
        let q = outcome_distribution(&lambda, &std).unwrap();
        let n = 100_000;
        let xs = sample_outcomes(&lambda, &std, n, &mut rng).unwrap();
        for (cell, &p) in q.iter().enumerate() {
            let freq = xs.iter().filter(|&&x| x == cell).count() as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn empty_schedule_run() {
        let src = StateSource::Fixed(DensityMatrix::<f64>::maximally_mixed(4));
        let t = run_schedule(&src, &ScheduleKind::Fixed.build(4), 0, RngSeed(1)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn history_blind_strategy_matches_nonadaptive_schedule() {
        let povm = Arc::new(basis_povm(&haar_unitary::<f64, _>(4, &mut RngSeed(8).rng())).unwrap());
        let nonadaptive = MeasurementSchedule::Nonadaptive(vec![povm.clone()]);
        let adaptive = MeasurementSchedule::Adaptive(Arc::new(FixedBasis(povm)));
        let src = StateSource::HardInstance { d: 4, eps: 0.8 };
        for s in 0..20 {
            let a = run_schedule(&src, &nonadaptive, 30, RngSeed(s)).unwrap();
            let b = run_schedule(&src, &adaptive, 30, RngSeed(s)).unwrap();
            assert_eq!(a.outcomes, b.outcomes);
        }
    }

    #[test]
    fn adaptive_strategies_produce_valid_transcripts() {
        let src = StateSource::HardInstance { d: 4, eps: 0.5 };
        for kind in [ScheduleKind::FreshHaar, ScheduleKind::GreedyRealign] {
            let run = run_schedule_with_next(&src, &kind.build(4), 12, RngSeed(2)).unwrap();
            assert_eq!(run.transcript.len(), 12);
            assert_eq!(run.transcript.povm_ids.len(), 12);
            assert_eq!(run.next_povm.dim(), 4);
            let again = run_schedule(&src, &kind.build(4), 12, RngSeed(2)).unwrap();
            assert_eq!(again.outcomes, run.transcript.outcomes);
        }
    }

    struct WrongDimension;
    impl AdaptiveStrategy<f64> for WrongDimension {
        fn name(&self) -> &str {
            "wrong"
        }
        fn choose(&self, _h: &Transcript<f64>, _r: &mut StreamRng) -> Result<Arc<Povm<f64>>> {
            Ok(Arc::new(Povm::standard_basis(3)))
        }
    }

    #[test]
    fn invalid_adaptive_povm_is_a_consistency_error() {
        let src = StateSource::Fixed(DensityMatrix::<f64>::maximally_mixed(4));
        let sched = MeasurementSchedule::Adaptive(Arc::new(WrongDimension));
        assert!(matches!(run_schedule(&src, &sched, 3, RngSeed(0)), Err(Error::Consistency(_))));
    }

    // Under a nonadaptive schedule the null transcript law is a product measure:
    // chi-square independence test on (x_1, x_2), d = 4, 10^4 transcripts.
    // 9 degrees of freedom, 0.99 quantile 21.666.
    #[test]
    fn null_transcript_steps_are_independent() {
        let d = 4;
        let src = StateSource::Fixed(DensityMatrix::<f64>::maximally_mixed(d));
        let sched = ScheduleKind::Fixed.build(d);
        let n = 10_000;
        let mut table = vec![vec![0f64; d]; d];
        for s in 0..n {
            let t = run_schedule(&src, &sched, 2, RngSeed(1000).derive(s)).unwrap();
            table[t.outcomes[0]][t.outcomes[1]] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..d).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let mut chi2 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let exp = rows[i] * cols[j] / n as f64;
                chi2 += (table[i][j] - exp).powi(2) / exp;
            }
        }
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mixed_state_outcomes_follow_traces(seed in any::<u64>(), d in 2usize..6, m in 2usize..5) {
            // Random POVM: M_x = S^{-1/2} A_x S^{-1/2} with A_x = G G† and S = Σ A_x.
            let mut rng = RngSeed(seed).rng();
            let povm = random_povm(d, m, &mut rng);
            let q = outcome_distribution(&DensityMatrix::maximally_mixed(d), &povm).unwrap();
            for (x, qx) in q.iter().enumerate() {
                prop_assert!((qx - povm.element(x).trace() / d as f64).abs() <= 1e-12);
            }
        }

        #[test]
        fn hard_instance_spectrum_is_conjugation_invariant(seed in any::<u64>()) {
            let mut rng = RngSeed(seed).rng();
            let u = haar_unitary::<f64, _>(6, &mut rng);
            let v = haar_unitary::<f64, _>(6, &mut rng);
            let a = hard_instance_state(6, 0.4, &u).unwrap().hermitian().eigh().unwrap().eigenvalues;
            let b = hard_instance_state(6, 0.4, &(&v * &u)).unwrap().hermitian().eigh().unwrap().eigenvalues;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn sampled_states_and_povms_satisfy_invariants(seed in any::<u64>(), d in 2usize..6) {
            let mut rng = RngSeed(seed).rng();
            let povm = random_povm(d, 3, &mut rng);
            let mut sum = Matrix::zeros(d);
            for m in povm.elements() {
                sum = &sum + m.matrix();
                prop_assert!(m.eigh().unwrap().eigenvalues[0] >= -1e-10);
            }
            prop_assert!(sum.max_abs_diff(&Matrix::identity(d)) <= 1e-9);
            let v = crate::haar::random_unit_vector::<f64, _>(d, &mut rng);
            let rho = DensityMatrix::pure(&v).unwrap();
            prop_assert!(DensityMatrix::new(rho.hermitian().clone()).is_ok());
        }
    }

    fn random_povm(d: usize, m: usize, rng: &mut StreamRng) -> Povm<f64> {
        super::random_povm(d, m, rng).unwrap()
    }
}
