//! Monte Carlo wave-function unraveling of the augmented master equation.
//!
//! Each step either propagates with the non-Hermitian effective Hamiltonian
//! `H_e = H − (i/2) Σ γ_f L_f†L_f` or applies one jump, using the first-order
//! jump probabilities `δp_f = dt γ_f ⟨φ|L_f†L_f|φ⟩`. Ensembles are reduced in
//! trajectory-index order with pairwise summation, so results depend only on
//! the base seed and the inputs.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augmented::AugmentedModel;
use crate::error::{Error, Result};
use crate::lindblad::OpenSystem;
use crate::operator::{expm_propagator, ComplexMatrix, SparseMatrix, StateVector, I};
use crate::rng::{self, step_pair};
use crate::schedule::{ControlSchedule, Segment};

/// Largest jump probability a single step may carry.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;

/// Dimensions up to this use a precomputed dense propagator per segment;
/// larger spaces apply a truncated Taylor series of the sparse `H_e`.
pub const DENSE_PROPAGATOR_MAX_DIM: usize = 128;

/// Trajectories advanced in lockstep by one worker.
pub const TRAJECTORY_BATCH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    #[serde(default = "crate::lindblad::default_dt")]
    pub dt: f64,
    #[serde(default, rename = "seed")]
    pub base_seed: u64,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsembleResult {
    /// Ensemble density matrix. [`run_ensemble`] returns the principal-system
    /// reduction; [`ensemble_average`] keeps the full space of its inputs.
    pub rho: ComplexMatrix,
    /// (seed, jump count) per trajectory, in index order.
    pub per_traj: Vec<(u64, usize)>,
    /// Standard error of the observable's ensemble mean.
    pub std_err_estimate: f64,
}

/// `H_e = H − (i/2) Σ γ L†L`.
pub fn effective_hamiltonian(
    h_total: &ComplexMatrix,
    jumps: &[(ComplexMatrix, f64)],
) -> Result<ComplexMatrix> {
    let mut h_e = h_total.clone();
    for (l, g) in jumps {
        if l.dim() != h_total.dim() {
            return Err(Error::DimensionMismatch("jump and Hamiltonian dims differ".into()));
        }
        h_e.add_scaled_mut(&(&l.adjoint() * l), Complex64::new(0.0, -0.5 * g));
    }
    Ok(h_e)
}

/// Index of the channel that fires: channels are stable-sorted by descending
/// `δp_f`, and the first sorted position whose cumulative sum reaches
/// `r2·δp` is chosen.
pub fn select_channel(dps: &[f64], r2: f64) -> usize {
    let total: f64 = dps.iter().sum();
    let mut order: Vec<usize> = (0..dps.len()).collect();
    order.sort_by(|&a, &b| dps[b].total_cmp(&dps[a]));
    let target = r2 * total;
    let mut cum = 0.0;
    for &f in &order {
        cum += dps[f];
        if cum >= target {
            return f;
        }
    }
    // rounding left the target unreached: fall back to the last live channel
    *order.iter().rev().find(|&&f| dps[f] > 0.0).unwrap_or(&order[0])
}

/// One step from the dense reference definition.
pub fn trajectory_step(
    phi: &StateVector,
    h_e: &ComplexMatrix,
    jumps: &[(ComplexMatrix, f64)],
    dt: f64,
    r1: f64,
    r2: f64,
) -> Result<StateVector> {
    let dps: Vec<f64> = jumps.iter().map(|(l, g)| dt * g * l.apply(phi).norm_sqr()).collect();
    let dp: f64 = dps.iter().sum();
    if dp > MAX_STEP_PROBABILITY {
        return Err(Error::StepTooLarge { dp, dt });
    }
    let mut next = if dp == 0.0 || r1 > dp {
        expm_propagator(h_e, dt).apply(phi)
    } else {
        let (l, g) = &jumps[select_channel(&dps, r2)];
        let mut v = l.apply(phi);
        v.scale_mut(Complex64::new(g.sqrt(), 0.0));
        v
    };
    next.normalize();
    Ok(next)
}

/// Split-storage CSR used on state vectors.
struct SplitRows {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitRows {
    fn new(s: &SparseMatrix, alpha: Complex64) -> Self {
        let mut out = Self { row_ptr: vec![0], cols: Vec::new(), re: Vec::new(), im: Vec::new() };
        for i in 0..s.dim() {
            for (j, v) in s.row(i) {
                let v = alpha * v;
                out.cols.push(j);
                out.re.push(v.re);
                out.im.push(v.im);
            }
            out.row_ptr.push(out.cols.len());
        }
        out
    }

    /// y = A x
    fn mul(&self, x: &SplitVec, y: &mut SplitVec) {
        for (i, (yr, yi)) in y.re.iter_mut().zip(y.im.iter_mut()).enumerate() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut ar, mut ai) = (0.0, 0.0);
            for ((&c, &vr), &vi) in self.cols[s..e].iter().zip(&self.re[s..e]).zip(&self.im[s..e]) {
                ar += vr * x.re[c] - vi * x.im[c];
                ai += vr * x.im[c] + vi * x.re[c];
            }
            *yr = ar;
            *yi = ai;
        }
    }
}

#[derive(Clone)]
struct SplitVec {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitVec {
    fn zeros(n: usize) -> Self {
        Self { re: vec![0.0; n], im: vec![0.0; n] }
    }

    fn from_state(v: &StateVector) -> Self {
        Self {
            re: v.as_slice().iter().map(|z| z.re).collect(),
            im: v.as_slice().iter().map(|z| z.im).collect(),
        }
    }

    fn to_state(&self) -> StateVector {
        StateVector::from_vec(self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect())
    }

    /// Sum of squares with eight interleaved partial sums, so the loop
    /// vectorizes while the summation order stays fixed.
    fn norm_sqr(&self) -> f64 {
        let mut acc = [0.0f64; 8];
        for part in [&self.re, &self.im] {
            let chunks = part.chunks_exact(8);
            let tail = chunks.remainder();
            for c in chunks {
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += v * v;
                }
            }
            for (a, v) in acc.iter_mut().zip(tail) {
                *a += v * v;
            }
        }
        ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
    }

    fn scale(&mut self, s: f64) {
        self.re.iter_mut().chain(self.im.iter_mut()).for_each(|v| *v *= s);
    }
}

/// Column-major split copy of a dense propagator; applying it is a sequence
/// of column axpys, which vectorizes.
struct DenseColumns {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl DenseColumns {
    fn new(u: &ComplexMatrix) -> Self {
        let n = u.dim();
        let mut re = vec![0.0; n * n];
        let mut im = vec![0.0; n * n];
        for i in 0..n {
            for (j, z) in u.row(i).iter().enumerate() {
                re[j * n + i] = z.re;
                im[j * n + i] = z.im;
            }
        }
        Self { n, re, im }
    }

    fn apply(&self, pairs: &mut [(&SplitVec, &mut SplitVec)]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the CPU supports AVX-512F.
                return unsafe { self.apply_avx512(pairs) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2.
                return unsafe { self.apply_avx2(pairs) };
            }
        }
        self.apply_body(pairs)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn apply_avx512(&self, pairs: &mut [(&SplitVec, &mut SplitVec)]) {
        self.apply_body(pairs)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn apply_avx2(&self, pairs: &mut [(&SplitVec, &mut SplitVec)]) {
        self.apply_body(pairs)
    }

    /// y = U x for every pair. Each column is reused across the batch while
    /// it is hot in cache; per-vector arithmetic does not depend on the batch.
    #[inline(always)]
    fn apply_body(&self, pairs: &mut [(&SplitVec, &mut SplitVec)]) {
        let n = self.n;
        for (_, y) in pairs.iter_mut() {
            y.re.fill(0.0);
            y.im.fill(0.0);
        }
        for j in 0..n {
            let (cr, ci) = (&self.re[j * n..(j + 1) * n], &self.im[j * n..(j + 1) * n]);
            for (x, y) in pairs.iter_mut() {
                let (xr, xi) = (x.re[j], x.im[j]);
                let (yr, yi) = (&mut y.re[..n], &mut y.im[..n]);
                for k in 0..n {
                    yr[k] += cr[k] * xr - ci[k] * xi;
                    yi[k] += cr[k] * xi + ci[k] * xr;
                }
            }
        }
    }
}

enum Propagator {
    Dense(DenseColumns),
    /// Σ_k (−i h H_e)^k / k! applied term by term with the step length `h`.
    Taylor { minus_i_h_e: SplitRows, h: f64 },
}

impl Propagator {
    fn build(h_e: &SparseMatrix, h: f64, dense: bool) -> Self {
        if dense {
            Propagator::Dense(DenseColumns::new(&expm_propagator(&h_e.to_dense(), h)))
        } else {
            Propagator::Taylor { minus_i_h_e: SplitRows::new(h_e, -I), h }
        }
    }

    fn apply(&self, pairs: &mut [(&SplitVec, &mut SplitVec)], t1: &mut SplitVec, t2: &mut SplitVec) {
        match self {
            Propagator::Dense(u) => u.apply(pairs),
            Propagator::Taylor { minus_i_h_e, h } => {
                for (x, y) in pairs.iter_mut() {
                    taylor(minus_i_h_e, *h, x, y, t1, t2);
                }
            }
        }
    }
}

/// y = Σ_k (−i h H_e)^k x / k!, truncated once a term drops below 1e-17.
fn taylor(minus_i_h_e: &SplitRows, h: f64, x: &SplitVec, y: &mut SplitVec, t1: &mut SplitVec, t2: &mut SplitVec) {
    y.re.copy_from_slice(&x.re);
    y.im.copy_from_slice(&x.im);
    t1.re.copy_from_slice(&x.re);
    t1.im.copy_from_slice(&x.im);
    for k in 1..=60 {
        minus_i_h_e.mul(t1, t2);
        t2.scale(h / k as f64);
        let mut term = 0.0f64;
        for (yv, tv) in y.re.iter_mut().zip(&t2.re).chain(y.im.iter_mut().zip(&t2.im)) {
            *yv += tv;
            term = term.max(tv.abs());
        }
        std::mem::swap(t1, t2);
        if term < 1e-17 {
            break;
        }
    }
}

/// One segment of the schedule: its full-step propagator (shared per
/// Hamiltonian), the number of full steps and an optional shortened final
/// step.
struct SegmentPlan {
    kind: usize,
    full_steps: usize,
    remainder: Option<(f64, Propagator)>,
}

/// Precomputed propagators for one (system, schedule, Hamiltonians, dt).
pub struct TrajectoryEngine {
    dim: usize,
    dim_p: usize,
    dim_a: usize,
    dt: f64,
    jumps: Vec<(SplitRows, f64)>,
    full: Vec<Propagator>,
    plans: Vec<SegmentPlan>,
}

impl TrajectoryEngine {
    pub fn new(
        system: &OpenSystem,
        schedule: &ControlSchedule,
        h: &ComplexMatrix,
        h_mix: &ComplexMatrix,
        dt: f64,
    ) -> Result<Self> {
        Self::with_propagator(system, schedule, h, h_mix, dt, system.dim() <= DENSE_PROPAGATOR_MAX_DIM)
    }

    pub(crate) fn with_propagator(
        system: &OpenSystem,
        schedule: &ControlSchedule,
        h: &ComplexMatrix,
        h_mix: &ComplexMatrix,
        dt: f64,
        dense: bool,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if schedule.is_empty() {
            return Err(Error::EmptySchedule);
        }
        let dim = system.dim();
        let h_e = [system.effective_hamiltonian(h)?, system.effective_hamiltonian(h_mix)?];
        let full = h_e.iter().map(|m| Propagator::build(m, dt, dense)).collect();
        let mut plans = Vec::new();
        for (seg, duration) in schedule.segments() {
            if duration == 0.0 {
                continue;
            }
            let kind = if seg == Segment::Cost { 0 } else { 1 };
            let lengths = step_lengths(duration, dt);
            let last = *lengths.last().unwrap();
            let (full_steps, remainder) = if last == dt {
                (lengths.len(), None)
            } else {
                (lengths.len() - 1, Some((last, Propagator::build(&h_e[kind], last, dense))))
            };
            plans.push(SegmentPlan { kind, full_steps, remainder });
        }
        let jumps = system
            .jumps
            .iter()
            .filter(|(_, g)| *g > 0.0)
            .map(|(l, g)| (SplitRows::new(l, Complex64::new(1.0, 0.0)), *g))
            .collect();
        Ok(Self { dim, dim_p: system.dim_p, dim_a: system.dim_a, dt, jumps, full, plans })
    }

    /// Runs one trajectory from `psi0` (full space), returning the final
    /// normalized state and its jump count.
    pub fn run(&self, psi0: &StateVector, seed: u64) -> Result<(StateVector, usize)> {
        Ok(self.run_batch(psi0, &[seed])?.pop().unwrap())
    }

    /// Runs one trajectory per seed in lockstep. Each result equals the
    /// corresponding [`run`](Self::run).
    pub fn run_batch(&self, psi0: &StateVector, seeds: &[u64]) -> Result<Vec<(StateVector, usize)>> {
        if psi0.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state has dim {}, engine expects {}",
                psi0.dim(),
                self.dim
            )));
        }
        let n = self.dim;
        let mut walkers: Vec<Walker> = seeds
            .iter()
            .map(|&seed| Walker {
                rng: rng::stream(seed),
                phi: SplitVec::from_state(psi0),
                next: SplitVec::zeros(n),
                jumped: self.jumps.iter().map(|_| SplitVec::zeros(n)).collect(),
                dps: vec![0.0; self.jumps.len()],
                fired: None,
                jumps: 0,
            })
            .collect();
        let (mut t1, mut t2) = (SplitVec::zeros(n), SplitVec::zeros(n));
        for plan in &self.plans {
            let steps = (0..plan.full_steps)
                .map(|_| (self.dt, &self.full[plan.kind]))
                .chain(plan.remainder.iter().map(|(h, p)| (*h, p)));
            for (h, prop) in steps {
                for w in walkers.iter_mut() {
                    for (((l, g), out), dp) in self.jumps.iter().zip(w.jumped.iter_mut()).zip(w.dps.iter_mut()) {
                        l.mul(&w.phi, out);
                        *dp = h * g * out.norm_sqr();
                    }
                    let dp: f64 = w.dps.iter().sum();
                    if dp > MAX_STEP_PROBABILITY {
                        return Err(Error::StepTooLarge { dp, dt: h });
                    }
                    let (r1, r2) = step_pair(&mut w.rng);
                    w.fired = if dp == 0.0 || r1 > dp { None } else { Some(select_channel(&w.dps, r2)) };
                }
                let mut pairs: Vec<(&SplitVec, &mut SplitVec)> = walkers
                    .iter_mut()
                    .filter(|w| w.fired.is_none())
                    .map(|w| (&w.phi, &mut w.next))
                    .collect();
                if !pairs.is_empty() {
                    prop.apply(&mut pairs, &mut t1, &mut t2);
                }
                for w in walkers.iter_mut() {
                    match w.fired {
                        None => std::mem::swap(&mut w.phi, &mut w.next),
                        Some(f) => {
                            std::mem::swap(&mut w.phi, &mut w.jumped[f]);
                            w.jumps += 1;
                        }
                    }
                    let norm = w.phi.norm_sqr().sqrt();
                    if !(norm > 0.0 && norm.is_finite()) {
                        return Err(Error::InvalidArgument("trajectory state lost its norm".into()));
                    }
                    w.phi.scale(1.0 / norm);
                }
            }
        }
        Ok(walkers.into_iter().map(|w| (w.phi.to_state(), w.jumps)).collect())
    }
}

struct Walker {
    rng: rng::Stream,
    phi: SplitVec,
    next: SplitVec,
    jumped: Vec<SplitVec>,
    dps: Vec<f64>,
    fired: Option<usize>,
    jumps: usize,
}

/// Step lengths covering `duration`: full steps of `dt`, the last one
/// shortened to land exactly on the end.
fn step_lengths(duration: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut remaining = duration;
    while remaining > 1e-14 {
        let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        out.push(if (h - dt).abs() <= dt * 1e-9 { dt } else { h });
        remaining -= h;
    }
    out
}

/// A single trajectory of the augmented model with the given seed.
pub fn run_trajectory(
    phi0: &StateVector,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    model: &AugmentedModel,
    dt: f64,
    seed: u64,
) -> Result<StateVector> {
    let engine = TrajectoryEngine::new(&OpenSystem::from_model(model), schedule, h, h_mix, dt)?;
    Ok(engine.run(phi0, seed)?.0)
}

/// ρ = (1/N) Σ |φ_k⟩⟨φ_k| with pairwise summation in input order. The
/// standard error refers to `observable` (0 when none is given).
pub fn ensemble_average(
    phis: &[StateVector],
    observable: Option<&ComplexMatrix>,
) -> Result<TrajectoryEnsembleResult> {
    let first = phis.first().ok_or(Error::EmptyEnsemble)?;
    let dim = first.dim();
    if phis.iter().any(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch("ensemble states differ in dimension".into()));
    }
    let mut sum = PairwiseSum::default();
    let mut values = Vec::with_capacity(phis.len());
    for phi in phis {
        let rho = phi.outer();
        if let Some(o) = observable {
            values.push(o.trace_product(&rho).re);
        }
        sum.push(rho);
    }
    let rho = sum.finish(phis.len())?;
    Ok(TrajectoryEnsembleResult {
        rho,
        per_traj: Vec::new(),
        std_err_estimate: std_err(&values),
    })
}

/// Runs `cfg.n_traj` trajectories from `psi_p0 ⊗ vacuum` on up to `workers`
/// threads and returns the principal-system ensemble state. The standard
/// error refers to `tr(h ρ_p)`.
pub fn run_ensemble(
    system: &OpenSystem,
    psi_p0: &StateVector,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    cfg: &TrajectoryConfig,
    workers: usize,
) -> Result<TrajectoryEnsembleResult> {
    cfg.validate()?;
    if psi_p0.dim() != system.dim_p {
        return Err(Error::DimensionMismatch(format!(
            "principal state has dim {}, system expects {}",
            psi_p0.dim(),
            system.dim_p
        )));
    }
    let engine = TrajectoryEngine::new(system, schedule, h, h_mix, cfg.dt)?;
    let psi0 = psi_p0.tensor(&StateVector::basis(system.dim_a, 0));
    let (dp, da) = (engine.dim_p, engine.dim_a);
    let batch = |start: usize| -> Result<Vec<(ComplexMatrix, f64, u64, usize)>> {
        let end = (start + TRAJECTORY_BATCH).min(cfg.n_traj);
        let seeds: Vec<u64> =
            (start..end).map(|i| rng::trajectory_seed(cfg.base_seed, i as u64)).collect();
        let finals = engine.run_batch(&psi0, &seeds)?;
        Ok(finals
            .into_iter()
            .zip(seeds)
            .map(|((phi, jumps), seed)| {
                let mut rho_p = ComplexMatrix::zeros(dp);
                phi.accumulate_reduced(dp, da, 1.0, &mut rho_p);
                let value = h.trace_product(&rho_p).re;
                (rho_p, value, seed, jumps)
            })
            .collect())
    };

    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let chunk = 2 * TRAJECTORY_BATCH * workers;
    let mut sum = PairwiseSum::default();
    let mut values = Vec::with_capacity(cfg.n_traj);
    let mut per_traj = Vec::with_capacity(cfg.n_traj);
    for start in (0..cfg.n_traj).step_by(chunk) {
        let end = (start + chunk).min(cfg.n_traj);
        let starts: Vec<usize> = (start..end).step_by(TRAJECTORY_BATCH).collect();
        let results: Vec<_> = pool.install(|| starts.into_par_iter().map(batch).collect());
        for r in results {
            for (rho_p, value, seed, jumps) in r? {
                sum.push(rho_p);
                values.push(value);
                per_traj.push((seed, jumps));
            }
        }
    }
    Ok(TrajectoryEnsembleResult {
        rho: sum.finish(cfg.n_traj)?,
        per_traj,
        std_err_estimate: std_err(&values),
    })
}

fn std_err(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Binary-counter pairwise summation: the association pattern depends only on
/// the number of terms.
#[derive(Default)]
struct PairwiseSum {
    stack: Vec<(u32, ComplexMatrix)>,
}

impl PairwiseSum {
    fn push(&mut self, m: ComplexMatrix) {
        let mut item = (0u32, m);
        while let Some(top) = self.stack.last() {
            if top.0 != item.0 {
                break;
            }
            let (level, mut acc) = self.stack.pop().unwrap();
            acc.add_scaled_mut(&item.1, Complex64::new(1.0, 0.0));
            item = (level + 1, acc);
        }
        self.stack.push(item);
    }

    fn finish(mut self, count: usize) -> Result<ComplexMatrix> {
        let (_, mut acc) = self.stack.pop().ok_or(Error::EmptyEnsemble)?;
        while let Some((_, m)) = self.stack.pop() {
            let mut m = m;
            m.add_scaled_mut(&acc, Complex64::new(1.0, 0.0));
            acc = m;
        }
        Ok(acc.scaled(Complex64::new(1.0 / count as f64, 0.0)))
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmented::{build_augmented_model, LorentzianMode};
    use crate::lindblad::{evolve_system, unitary_piecewise, SolverConfig};
    use crate::maxcut::{build_cost_hamiltonian, build_mixer, WeightedGraph};
    use crate::operator::{sigma_z, trace_distance, ONE, ZERO};

    fn model(n: usize, kappa: f64, levels: usize) -> AugmentedModel {
        build_augmented_model(n, &[LorentzianMode::new(3.0, 0.6, kappa, levels).unwrap()]).unwrap()
    }

    fn problem(n: usize) -> (ComplexMatrix, ComplexMatrix) {
        let g = if n == 1 {
            return (sigma_z().scaled(Complex64::new(0.5, 0.0)), build_mixer(1).unwrap());
        } else {
            WeightedGraph::new(2, vec![(1, 2, 0.7)]).unwrap()
        };
        (build_cost_hamiltonian(&g).unwrap(), build_mixer(n).unwrap())
    }

    fn dense_parts(m: &AugmentedModel, h_p: &ComplexMatrix) -> (ComplexMatrix, Vec<(ComplexMatrix, f64)>) {
        let jumps: Vec<_> = m.jump_ops.iter().map(|(l, g)| (l.to_dense(), *g)).collect();
        let h_e = effective_hamiltonian(&m.total_hamiltonian(h_p).unwrap().to_dense(), &jumps).unwrap();
        (h_e, jumps)
    }

    #[test]
    fn effective_hamiltonian_damps_excited_level() {
        let sm = ComplexMatrix::from_rows(&[[ZERO, ONE], [ZERO, ZERO]]);
        let h_e = effective_hamiltonian(&ComplexMatrix::zeros(2), &[(sm, 0.4)]).unwrap();
        assert!(h_e.max_abs_diff(&ComplexMatrix::diagonal(&[ZERO, Complex64::new(0.0, -0.2)])) < 1e-15);
    }

    #[test]
    fn vacuum_never_jumps() {
        let m = model(1, 1.0, 3);
        let (h, _) = problem(1);
        let (h_e, jumps) = dense_parts(&m, &h);
        let phi = m.initial_state(&StateVector::basis(2, 0)).unwrap();
        let next = trajectory_step(&phi, &h_e, &jumps, 1e-3, 0.0, 0.0).unwrap();
        let expected = expm_propagator(&h_e, 1e-3).apply(&phi);
        let mut expected = expected;
        expected.normalize();
        let diff: f64 = next.as_slice().iter().zip(expected.as_slice()).map(|(a, b)| (a - b).norm()).sum();
        assert!(diff < 1e-14);
    }

    #[test]
    fn fock_one_jump_returns_to_vacuum() {
        let m = model(1, 1.0, 3);
        let (h, _) = problem(1);
        let (h_e, jumps) = dense_parts(&m, &h);
        let phi = StateVector::basis(2, 0).tensor(&StateVector::basis(3, 1));
        let next = trajectory_step(&phi, &h_e, &jumps, 1e-3, 0.0, 0.5).unwrap();
        let vac = StateVector::basis(2, 0).tensor(&StateVector::basis(3, 0));
        assert!((next.inner(&vac).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn larger_channel_fires_first() {
        assert_eq!(select_channel(&[0.02, 0.01], 0.5), 0);
        assert_eq!(select_channel(&[0.01, 0.02], 0.5), 1);
        assert_eq!(select_channel(&[0.01, 0.02], 0.9), 0);
        assert_eq!(select_channel(&[0.01, 0.01], 0.4), 0);
        assert_eq!(select_channel(&[0.01, 0.01], 0.6), 1);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = model(1, 1.0, 3);
        let (h, _) = problem(1);
        let (h_e, jumps) = dense_parts(&m, &h);
        let phi = StateVector::basis(2, 0).tensor(&StateVector::basis(3, 2));
        let err = trajectory_step(&phi, &h_e, &jumps, 0.1, 0.5, 0.5).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn step_lengths_land_on_segment_end() {
        assert_eq!(step_lengths(0.003, 1e-3).len(), 3);
        let l = step_lengths(0.0025, 1e-3);
        assert_eq!(l.len(), 3);
        assert!((l[2] - 5e-4).abs() < 1e-15);
        assert!((l.iter().sum::<f64>() - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_matches_closed_evolution() {
        let m = model(2, 0.0, 3);
        let (h, hm) = problem(2);
        let sched = ControlSchedule::new(vec![(0.4, 0.3), (0.25, 0.5)]).unwrap();
        let psi = StateVector::uniform_superposition(2);
        let cfg = TrajectoryConfig { n_traj: 3, dt: 1e-2, base_seed: 7 };
        let res = run_ensemble(&OpenSystem::from_model(&m), &psi, &sched, &h, &hm, &cfg, 2).unwrap();
        let exact = unitary_piecewise(&psi, &sched, &h, &hm).unwrap().outer();
        assert!(res.rho.max_abs_diff(&exact) < 1e-10);
        assert!(res.per_traj.iter().all(|&(_, j)| j == 0));
        assert!(res.std_err_estimate < 1e-10);
    }

    #[test]
    fn ensemble_is_reproducible_across_worker_counts() {
        let m = model(2, 1.0, 4);
        let (h, hm) = problem(2);
        let sched = ControlSchedule::new(vec![(0.6, 0.4)]).unwrap();
        let psi = StateVector::uniform_superposition(2);
        let cfg = TrajectoryConfig { n_traj: 13, dt: 2e-3, base_seed: 42 };
        let sys = OpenSystem::from_model(&m);
        let a = run_ensemble(&sys, &psi, &sched, &h, &hm, &cfg, 1).unwrap();
        let b = run_ensemble(&sys, &psi, &sched, &h, &hm, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let seeds: Vec<u64> = a.per_traj.iter().map(|p| p.0).collect();
        assert_eq!(seeds, (0..13).map(|i| 42 ^ i).collect::<Vec<_>>());
    }

    #[test]
    fn taylor_and_dense_propagators_agree() {
        let m = model(2, 1.0, 4);
        let (h, hm) = problem(2);
        let sched = ControlSchedule::new(vec![(0.35, 0.2)]).unwrap();
        let sys = OpenSystem::from_model(&m);
        let psi = m.initial_state(&StateVector::uniform_superposition(2)).unwrap();
        let dense = TrajectoryEngine::with_propagator(&sys, &sched, &h, &hm, 2e-3, true).unwrap();
        let taylor = TrajectoryEngine::with_propagator(&sys, &sched, &h, &hm, 2e-3, false).unwrap();
        for seed in 0..4 {
            let (a, ja) = dense.run(&psi, seed).unwrap();
            let (b, jb) = taylor.run(&psi, seed).unwrap();
            assert_eq!(ja, jb);
            let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).sum();
            assert!(diff < 1e-10, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn batched_runs_match_single_runs() {
        let m = model(2, 1.0, 4);
        let (h, hm) = problem(2);
        let sched = ControlSchedule::new(vec![(0.5, 0.3)]).unwrap();
        let sys = OpenSystem::from_model(&m);
        let psi = m.initial_state(&StateVector::uniform_superposition(2)).unwrap();
        for dense in [true, false] {
            let engine = TrajectoryEngine::with_propagator(&sys, &sched, &h, &hm, 1e-3, dense).unwrap();
            let seeds = [3u64, 9, 27, 81, 243];
            let batch = engine.run_batch(&psi, &seeds).unwrap();
            for (seed, got) in seeds.iter().zip(batch) {
                assert_eq!(engine.run(&psi, *seed).unwrap(), got);
            }
        }
    }

    #[test]
    fn single_trajectory_matches_engine() {
        let m = model(2, 1.0, 4);
        let (h, hm) = problem(2);
        let sched = ControlSchedule::new(vec![(0.3, 0.2)]).unwrap();
        let psi = m.initial_state(&StateVector::uniform_superposition(2)).unwrap();
        let a = run_trajectory(&psi, &sched, &h, &hm, &m, 1e-3, 5).unwrap();
        let b = run_trajectory(&psi, &sched, &h, &hm, &m, 1e-3, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_converges_to_master_equation() {
        let m = model(2, 1.0, 4);
        let (h, hm) = problem(2);
        let sched = ControlSchedule::new(vec![(0.8, 0.6), (0.5, 0.4)]).unwrap();
        let psi = StateVector::uniform_superposition(2);
        let sys = OpenSystem::from_model(&m);
        let cfg = TrajectoryConfig { n_traj: 800, dt: 1e-3, base_seed: 11 };
        let ens = run_ensemble(&sys, &psi, &sched, &h, &hm, &cfg, 4).unwrap();
        let rho = evolve_system(&sys, &m.initial_density(&psi.outer()).unwrap(), &sched, &h, &hm, &SolverConfig::default())
            .unwrap();
        let rho_p = crate::operator::partial_trace_ancilla(&rho, sys.dim_p, sys.dim_a).unwrap();
        let d = trace_distance(&ens.rho, &rho_p).unwrap();
        assert!(d < 0.05, "trace distance {d}");
        let e_ens = h.trace_product(&ens.rho).re;
        let e_me = h.trace_product(&rho_p).re;
        assert!((e_ens - e_me).abs() < 4.0 * ens.std_err_estimate + 1e-3);
        assert!(ens.per_traj.iter().any(|&(_, j)| j > 0));
    }

    #[test]
    fn ensemble_average_of_basis_states() {
        let phis = [StateVector::basis(2, 0), StateVector::basis(2, 1)];
        let res = ensemble_average(&phis, Some(&sigma_z())).unwrap();
        assert!(res.rho.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.5, 0.5])) < 1e-15);
        assert!((res.std_err_estimate - 1.0).abs() < 1e-12);
        assert!(matches!(ensemble_average(&[], None), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn pairwise_sum_matches_plain_average() {
        let phis: Vec<_> = (0..7).map(|k| {
            let mut v = StateVector::from_vec(vec![Complex64::new(1.0, k as f64), Complex64::new(k as f64 * 0.3, 0.2)]);
            v.normalize();
            v
        }).collect();
        let res = ensemble_average(&phis, None).unwrap();
        let mut plain = ComplexMatrix::zeros(2);
        for p in &phis {
            plain.add_scaled_mut(&p.outer(), Complex64::new(1.0 / 7.0, 0.0));
        }
        assert!(res.rho.max_abs_diff(&plain) < 1e-15);
    }
}
