//! Synthetic homodyne records and integration of the linear filtering
//! equation.
//!
//! Records are generated through the innovations representation: the
//! normalized conditional state is propagated by Euler-Maruyama and the
//! output increments are
//!
//!   dY_a = dW_a + pi_t(L_a e^{i theta_a} + L_a^dag e^{-i theta_a}) dt
//!
//! with dW_a ~ N(0, dt) independent across channels. The unnormalized
//! filter is then integrated in the density picture (Ito form with the
//! Lindblad predual, Stratonovich form with the predual of the Stratonovich
//! generator and a Heun step) or the pure-state picture (drift K for Ito,
//! K(G, Theta) for Stratonovich, the latter defined only under complete
//! homodyne detection).

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::defaults;
use crate::linalg;
use crate::operators::Operator;
use crate::scalar::{re, Scalar, C};
use crate::superops::{
    k_ito, k_strat, lindblad, phased, strat_generator, MeasurementScheme, ModelError, ModelSpec,
    SuperOperator,
};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("initial density is not positive (min eigenvalue {min_eig:e})")]
    NonPositiveInitial { min_eig: f64 },
    #[error("initial density has trace {trace}, expected 1")]
    BadInitialTrace { trace: f64 },
    #[error("initial density is not self-adjoint")]
    NotSelfAdjoint,
    #[error("initial density is not pure enough for the pure picture (second eigenvalue {lambda2:e})")]
    NotPure { lambda2: f64 },
    #[error("step size must be positive and no larger than the horizon")]
    BadGrid,
    #[error("non-finite filter state at step {step}")]
    NonFinite { step: usize },
    #[error("filter degeneracy at step {step}: sigma_t(I) fell below {floor:e}")]
    Degeneracy { step: usize, floor: f64 },
    #[error("sigma_t(I) = {norm:e} is not a usable normalization")]
    VanishingNorm { norm: f64 },
    #[error("record carries {found} channels, scheme observes {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("record slice has {found} increments, expected {expected}")]
    SliceLength { expected: usize, found: usize },
    #[error("the Stratonovich pure-state form requires complete homodyne detection")]
    StratRequiresComplete,
    #[error("state picture does not match the requested step")]
    WrongPicture,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Integration form of the filtering equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Ito,
    Strat,
}

/// Synthetic measurement record on a uniform grid.
///
/// `t_grid[k]` is the start time of increment k; all channel sequences have
/// the grid's length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T: Scalar = f64> {
    pub dt: T,
    pub horizon: T,
    pub seed: u64,
    pub t_grid: Vec<T>,
    /// dY per observed channel, in scheme order.
    pub dy: Vec<Vec<T>>,
    /// Innovation increments dW used during generation.
    pub dw: Vec<Vec<T>>,
}

impl<T: Scalar> TrajectoryRecord<T> {
    pub fn steps(&self) -> usize {
        self.t_grid.len()
    }

    pub fn channels(&self) -> usize {
        self.dy.len()
    }

    fn dy_slice(&self, step: usize) -> Vec<T> {
        self.dy.iter().map(|ch| ch[step]).collect()
    }
}

/// Unnormalized conditional state in either picture.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterState<T: Scalar = f64> {
    Density(Operator<T>),
    Pure(Array1<C<T>>),
}

impl<T: Scalar> FilterState<T> {
    pub fn density(rho: Operator<T>) -> Self {
        FilterState::Density(rho)
    }

    pub fn pure(chi: Array1<C<T>>) -> Self {
        FilterState::Pure(chi)
    }

    /// Extracts the state vector of an (almost) rank-one density matrix.
    pub fn pure_from_density(rho: &Operator<T>, tol: T) -> Result<Self, FilterError> {
        let (vals, vecs) = linalg::eigh(rho.mat());
        let d = rho.dim();
        let lambda2 = if d >= 2 { vals[d - 2] } else { T::zero() };
        if lambda2.abs() > tol {
            return Err(FilterError::NotPure { lambda2: lambda2.as_f64() });
        }
        let top = vals[d - 1].max(T::zero()).sqrt();
        let chi = Array1::from_shape_fn(d, |i| vecs[(i, d - 1)] * re(top));
        Ok(FilterState::Pure(chi))
    }

    pub fn dim(&self) -> usize {
        match self {
            FilterState::Density(rho) => rho.dim(),
            FilterState::Pure(chi) => chi.len(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            FilterState::Density(rho) => linalg::all_finite(rho.mat()),
            FilterState::Pure(chi) => chi.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    /// sigma_t(X) = tr(rho X) or <chi|X chi>, unnormalized.
    pub fn sigma(&self, x: &Operator<T>) -> C<T> {
        match self {
            FilterState::Density(rho) => linalg::trace(&rho.mat().dot(x.mat())),
            FilterState::Pure(chi) => {
                let xc = x.mat().dot(chi);
                chi.iter()
                    .zip(xc.iter())
                    .fold(C::new(T::zero(), T::zero()), |s, (a, b)| s + a.conj() * *b)
            }
        }
    }

    /// sigma_t(I), evaluated through the same contraction as `sigma` so the
    /// normalized pi_t(I) is exactly one.
    pub fn norm(&self) -> T {
        self.sigma(&Operator::identity(self.dim())).re
    }

    fn scale_re(&self, s: T) -> Self {
        match self {
            FilterState::Density(rho) => FilterState::Density(rho.scale_re(s)),
            FilterState::Pure(chi) => FilterState::Pure(chi.mapv(|z| z * re(s))),
        }
    }
}

/// Normalized view over a filter state: pi_t(X) = sigma_t(X) / sigma_t(I).
#[derive(Debug, Clone)]
pub struct Normalized<T: Scalar = f64> {
    state: FilterState<T>,
    norm: T,
}

impl<T: Scalar> Normalized<T> {
    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn expectation(&self, x: &Operator<T>) -> C<T> {
        self.state.sigma(x) / re(self.norm)
    }

    /// The normalized state itself.
    pub fn state(&self) -> FilterState<T> {
        self.state.scale_re(match &self.state {
            FilterState::Density(_) => T::one() / self.norm,
            FilterState::Pure(_) => T::one() / self.norm.sqrt(),
        })
    }
}

/// pi_t as a ratio functional; errors when sigma_t(I) degenerates.
pub fn normalize<T: Scalar>(state: &FilterState<T>) -> Result<Normalized<T>, FilterError> {
    let norm = state.norm();
    if !(norm > T::cast(defaults::DEGENERACY_FLOOR)) || !norm.is_finite() {
        return Err(FilterError::VanishingNorm { norm: norm.as_f64() });
    }
    Ok(Normalized { state: state.clone(), norm })
}

fn validate_density<T: Scalar>(rho: &Operator<T>) -> Result<(), FilterError> {
    let scale = rho.fro_norm().max(T::one());
    if !rho.is_selfadjoint(T::cast(1e-10) * scale) {
        return Err(FilterError::NotSelfAdjoint);
    }
    let trace = rho.trace().re;
    if (trace - T::one()).abs() > T::cast(1e-10) {
        return Err(FilterError::BadInitialTrace { trace: trace.as_f64() });
    }
    let min_eig = rho.eigvals_hermitian()[0];
    if min_eig < T::cast(-1e-10) {
        return Err(FilterError::NonPositiveInitial { min_eig: min_eig.as_f64() });
    }
    Ok(())
}

/// Lindblad predual applied directly:
/// L*(rho) = sum_k (L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho}) - i [H, rho].
fn lindblad_predual_apply<T: Scalar>(model: &ModelSpec<T>, rho: &Operator<T>) -> Operator<T> {
    let half = T::cast(0.5);
    let mut out = Operator::zeros(model.dim());
    for l in model.couplings() {
        let ld = l.dagger();
        let ldl = &ld * l;
        out = &out + &(&(l * rho) * &ld);
        out = &out - &ldl.anticommutator(rho).scale_re(half);
    }
    let h = model.hamiltonian();
    &out + &h.commutator(rho).scale(C::new(T::zero(), -T::one()))
}

/// Generate a synthetic record by Euler-Maruyama integration of the
/// normalized stochastic master equation. Deterministic given the seed.
pub fn generate_record<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    rho0: &Operator<T>,
    horizon: T,
    dt: T,
    seed: u64,
) -> Result<TrajectoryRecord<T>, FilterError> {
    generate_record_stream(model, scheme, rho0, horizon, dt, seed, 0)
}

/// Like [`generate_record`] but on an explicit ChaCha stream, used to derive
/// independent ensemble members from (seed, trajectory index).
pub fn generate_record_stream<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    rho0: &Operator<T>,
    horizon: T,
    dt: T,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord<T>, FilterError> {
    scheme.validate_for(model)?;
    validate_density(rho0)?;
    if !(dt > T::zero()) || horizon < dt {
        return Err(FilterError::BadGrid);
    }
    let steps = (horizon / dt).round().as_f64() as usize;
    let steps = steps.max(1);
    let m = scheme.len();
    let m_ops: Vec<Operator<T>> = scheme
        .iter()
        .map(|(alpha, theta)| phased(&model.couplings()[alpha], theta))
        .collect();
    let quads: Vec<Operator<T>> = m_ops.iter().map(|mo| &*mo + &mo.dagger()).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sqrt_dt = dt.sqrt();

    let mut rho = rho0.clone();
    let mut t_grid = Vec::with_capacity(steps);
    let mut dy = vec![Vec::with_capacity(steps); m];
    let mut dw = vec![Vec::with_capacity(steps); m];

    for step in 0..steps {
        t_grid.push(dt * T::cast(step as f64));
        // signals use the pre-step normalized state
        let mut signals = Vec::with_capacity(m);
        let mut noises = Vec::with_capacity(m);
        for (a, quad) in quads.iter().enumerate() {
            let signal = linalg::trace(&rho.mat().dot(quad.mat())).re;
            let n: f64 = rng.sample(StandardNormal);
            let dwa = T::cast(n) * sqrt_dt;
            dw[a].push(dwa);
            dy[a].push(dwa + signal * dt);
            signals.push(signal);
            noises.push(dwa);
        }
        // normalized SME Euler step driven by the innovations
        let mut next = &rho + &lindblad_predual_apply(model, &rho).scale_re(dt);
        for (a, mo) in m_ops.iter().enumerate() {
            let jump = &(&(mo * &rho) + &(&rho * &mo.dagger())) - &rho.scale_re(signals[a]);
            next = &next + &jump.scale_re(noises[a]);
        }
        if !linalg::all_finite(next.mat()) {
            return Err(FilterError::NonFinite { step });
        }
        let tr = next.trace().re;
        if !(tr > T::zero()) {
            return Err(FilterError::Degeneracy { step, floor: 0.0 });
        }
        rho = next.scale_re(T::one() / tr);
    }

    Ok(TrajectoryRecord { dt, horizon, seed, t_grid, dy, dw })
}

fn check_slice<T: Scalar>(scheme: &MeasurementScheme<T>, dy: &[T]) -> Result<(), FilterError> {
    if dy.len() != scheme.len() {
        return Err(FilterError::SliceLength { expected: scheme.len(), found: dy.len() });
    }
    Ok(())
}

/// One Euler step of the Ito-form equation in the density picture:
/// rho <- rho + L*(rho) dt + sum_a (e^{i theta} L rho + e^{-i theta} rho L^dag) dY_a.
pub fn zakai_step_ito<T: Scalar>(
    state: &FilterState<T>,
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    dy: &[T],
    dt: T,
) -> Result<FilterState<T>, FilterError> {
    check_slice(scheme, dy)?;
    let rho = match state {
        FilterState::Density(rho) => rho,
        FilterState::Pure(_) => return Err(FilterError::WrongPicture),
    };
    let mut next = rho + &lindblad_predual_apply(model, rho).scale_re(dt);
    for ((alpha, theta), &dya) in scheme.iter().zip(dy) {
        let mo = phased(&model.couplings()[alpha], theta);
        let jump = &(&mo * rho) + &(rho * &mo.dagger());
        next = &next + &jump.scale_re(dya);
    }
    Ok(FilterState::Density(next))
}

/// One stochastic Heun step of the Stratonovich-form equation in the density
/// picture, with drift adjoint(strat_generator).
pub fn zakai_step_strat<T: Scalar>(
    state: &FilterState<T>,
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    dy: &[T],
    dt: T,
) -> Result<FilterState<T>, FilterError> {
    check_slice(scheme, dy)?;
    let strat_pre = strat_generator(model, scheme)?.adjoint();
    let m_ops: Vec<Operator<T>> = scheme
        .iter()
        .map(|(alpha, theta)| phased(&model.couplings()[alpha], theta))
        .collect();
    density_heun_step(state, &strat_pre, &m_ops, dy, dt)
}

fn density_increment<T: Scalar>(
    rho: &Operator<T>,
    drift_pre: &SuperOperator<T>,
    m_ops: &[Operator<T>],
    dy: &[T],
    dt: T,
) -> Operator<T> {
    let mut inc = drift_pre.apply(rho).scale_re(dt);
    for (mo, &dya) in m_ops.iter().zip(dy) {
        let jump = &(mo * rho) + &(rho * &mo.dagger());
        inc = &inc + &jump.scale_re(dya);
    }
    inc
}

fn density_heun_step<T: Scalar>(
    state: &FilterState<T>,
    drift_pre: &SuperOperator<T>,
    m_ops: &[Operator<T>],
    dy: &[T],
    dt: T,
) -> Result<FilterState<T>, FilterError> {
    let rho = match state {
        FilterState::Density(rho) => rho,
        FilterState::Pure(_) => return Err(FilterError::WrongPicture),
    };
    let half = T::cast(0.5);
    let inc0 = density_increment(rho, drift_pre, m_ops, dy, dt);
    let predictor = rho + &inc0;
    let inc1 = density_increment(&predictor, drift_pre, m_ops, dy, dt);
    Ok(FilterState::Density(rho + &(&inc0 + &inc1).scale_re(half)))
}

/// One step of the pure-state equation: Euler with drift K for the Ito form,
/// Heun with drift K(G, Theta) for the Stratonovich form (complete homodyne
/// only).
pub fn pure_step<T: Scalar>(
    state: &FilterState<T>,
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    dy: &[T],
    dt: T,
    form: Form,
) -> Result<FilterState<T>, FilterError> {
    check_slice(scheme, dy)?;
    let chi = match state {
        FilterState::Pure(chi) => chi,
        FilterState::Density(_) => return Err(FilterError::WrongPicture),
    };
    let m_ops: Vec<Operator<T>> = scheme
        .iter()
        .map(|(alpha, theta)| phased(&model.couplings()[alpha], theta))
        .collect();
    match form {
        Form::Ito => {
            let k = k_ito(model);
            Ok(FilterState::Pure(pure_euler(chi, &k, &m_ops, dy, dt)))
        }
        Form::Strat => {
            if !scheme.is_complete(model.channels()) {
                return Err(FilterError::StratRequiresComplete);
            }
            let k = k_strat(model, scheme)?;
            Ok(FilterState::Pure(pure_heun(chi, &k, &m_ops, dy, dt)))
        }
    }
}

fn pure_increment<T: Scalar>(
    chi: &Array1<C<T>>,
    k: &Operator<T>,
    m_ops: &[Operator<T>],
    dy: &[T],
    dt: T,
) -> Array1<C<T>> {
    let mut inc = k.mat().dot(chi).mapv(|z| z * re(dt));
    for (mo, &dya) in m_ops.iter().zip(dy) {
        inc = inc + mo.mat().dot(chi).mapv(|z| z * re(dya));
    }
    inc
}

fn pure_euler<T: Scalar>(
    chi: &Array1<C<T>>,
    k: &Operator<T>,
    m_ops: &[Operator<T>],
    dy: &[T],
    dt: T,
) -> Array1<C<T>> {
    chi + &pure_increment(chi, k, m_ops, dy, dt)
}

fn pure_heun<T: Scalar>(
    chi: &Array1<C<T>>,
    k: &Operator<T>,
    m_ops: &[Operator<T>],
    dy: &[T],
    dt: T,
) -> Array1<C<T>> {
    let half = T::cast(0.5);
    let inc0 = pure_increment(chi, k, m_ops, dy, dt);
    let predictor = chi + &inc0;
    let inc1 = pure_increment(&predictor, k, m_ops, dy, dt);
    chi + &(inc0 + inc1).mapv(|z| z * re(half))
}

/// Full-trajectory filter output.
#[derive(Debug, Clone)]
pub struct FilterOutput<T: Scalar = f64> {
    /// Grid including t = 0, length steps + 1.
    pub times: Vec<T>,
    /// sigma_t(I) (true unnormalized scale, tracked in log form internally).
    pub sigma_norm: Vec<T>,
    /// pi_t(X_i) per requested observable, one series per observable.
    pub expectations: Vec<Vec<C<T>>>,
    /// Number of positivity repairs applied (density picture).
    pub positivity_repairs: usize,
    /// Worst relative negative eigenvalue of the states actually emitted
    /// (after any projection repair).
    pub max_negative_eig: T,
    /// Worst raw Euler/Heun excursion below zero before repair, for
    /// diagnostics.
    pub worst_violation_before_repair: T,
}

/// Integrate a record through the filter, emitting pi_t of each observable
/// at every grid point (including t = 0).
pub fn run_filter<T: Scalar>(
    record: &TrajectoryRecord<T>,
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    initial: &FilterState<T>,
    form: Form,
    observables: &[Operator<T>],
) -> Result<FilterOutput<T>, FilterError> {
    scheme.validate_for(model)?;
    if record.channels() != scheme.len() {
        return Err(FilterError::ChannelMismatch { expected: scheme.len(), found: record.channels() });
    }
    let dt = record.dt;
    let m_ops: Vec<Operator<T>> = scheme
        .iter()
        .map(|(alpha, theta)| phased(&model.couplings()[alpha], theta))
        .collect();
    let lind_pre = lindblad(model).adjoint();
    let strat_pre = strat_generator(model, scheme)?.adjoint();
    let k_i = k_ito(model);
    let k_s = k_strat(model, scheme)?;
    if matches!((initial, form), (FilterState::Pure(_), Form::Strat))
        && !scheme.is_complete(model.channels())
    {
        return Err(FilterError::StratRequiresComplete);
    }

    let steps = record.steps();
    let mut state = initial.clone();
    let mut log_scale = T::zero();
    let mut times = Vec::with_capacity(steps + 1);
    let mut sigma_norm = Vec::with_capacity(steps + 1);
    let mut expectations = vec![Vec::with_capacity(steps + 1); observables.len()];
    let mut positivity_repairs = 0usize;
    let mut max_negative_eig = T::zero();
    let mut worst_violation_before_repair = T::zero();
    let floor_log = T::cast(defaults::DEGENERACY_FLOOR.ln());

    let emit = |state: &FilterState<T>,
                log_scale: T,
                t: T,
                times: &mut Vec<T>,
                sigma_norm: &mut Vec<T>,
                expectations: &mut Vec<Vec<C<T>>>| {
        let norm = state.norm();
        times.push(t);
        sigma_norm.push(norm * log_scale.exp());
        for (i, x) in observables.iter().enumerate() {
            expectations[i].push(state.sigma(x) / re(norm));
        }
    };
    emit(&state, log_scale, T::zero(), &mut times, &mut sigma_norm, &mut expectations);

    for step in 0..steps {
        let dy = record.dy_slice(step);
        state = match (&state, form) {
            (FilterState::Density(_), Form::Ito) => {
                let rho = match &state {
                    FilterState::Density(rho) => rho,
                    _ => unreachable!(),
                };
                let mut next = rho + &lind_pre.apply(rho).scale_re(dt);
                for (mo, &dya) in m_ops.iter().zip(&dy) {
                    let jump = &(mo * rho) + &(rho * &mo.dagger());
                    next = &next + &jump.scale_re(dya);
                }
                FilterState::Density(next)
            }
            (FilterState::Density(_), Form::Strat) => {
                density_heun_step(&state, &strat_pre, &m_ops, &dy, dt)?
            }
            (FilterState::Pure(chi), Form::Ito) => {
                FilterState::Pure(pure_euler(chi, &k_i, &m_ops, &dy, dt))
            }
            (FilterState::Pure(chi), Form::Strat) => {
                FilterState::Pure(pure_heun(chi, &k_s, &m_ops, &dy, dt))
            }
        };
        if !state.is_finite() {
            return Err(FilterError::NonFinite { step });
        }

        // rescale to keep the working state O(1); sigma_t(I) is recovered
        // from the accumulated log factor
        let norm = state.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(FilterError::Degeneracy { step, floor: defaults::DEGENERACY_FLOOR });
        }
        log_scale = log_scale + norm.ln();
        if log_scale < floor_log {
            return Err(FilterError::Degeneracy { step, floor: defaults::DEGENERACY_FLOOR });
        }
        state = state.scale_re(match &state {
            FilterState::Density(_) => T::one() / norm,
            FilterState::Pure(_) => T::one() / norm.sqrt(),
        });

        // positivity watch on the normalized density; the emitted state is
        // projected back into the cone when the raw step leaves it
        if let FilterState::Density(rho) = &state {
            let min_eig = rho.eigvals_hermitian()[0];
            if min_eig < T::zero() {
                worst_violation_before_repair = worst_violation_before_repair.max(-min_eig);
            }
            if min_eig < T::cast(defaults::POSITIVITY_CLIP) {
                positivity_repairs += 1;
                let repaired = clip_negative_eigenvalues(rho);
                let emitted_min = repaired.eigvals_hermitian()[0];
                if emitted_min < T::zero() {
                    max_negative_eig = max_negative_eig.max(-emitted_min);
                }
                state = FilterState::Density(repaired);
            } else if min_eig < T::zero() {
                max_negative_eig = max_negative_eig.max(-min_eig);
            }
        }

        emit(
            &state,
            log_scale,
            dt * T::cast((step + 1) as f64),
            &mut times,
            &mut sigma_norm,
            &mut expectations,
        );
    }

    Ok(FilterOutput {
        times,
        sigma_norm,
        expectations,
        positivity_repairs,
        max_negative_eig,
        worst_violation_before_repair,
    })
}

/// Clip negative eigenvalues to zero and restore the original trace.
fn clip_negative_eigenvalues<T: Scalar>(rho: &Operator<T>) -> Operator<T> {
    let d = rho.dim();
    let trace = rho.trace().re;
    let (vals, vecs) = linalg::eigh(rho.mat());
    let clipped: Vec<T> = vals.iter().map(|&v| v.max(T::zero())).collect();
    let new_trace: T = clipped.iter().copied().sum();
    let rescale = if new_trace > T::zero() { trace / new_trace } else { T::one() };
    let lam = Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            re(clipped[i] * rescale)
        } else {
            re(T::zero())
        }
    });
    let mat = vecs.dot(&lam).dot(&linalg::dagger(&vecs));
    // re-symmetrize against rounding
    let sym = (&mat + &linalg::dagger(&mat)).mapv(|z| z * re(T::cast(0.5)));
    Operator::new(sym).expect("clipped density is valid")
}

/// Ensemble statistics of Re pi_t(X) at selected sample times.
#[derive(Debug, Clone)]
pub struct EnsembleStats<T: Scalar = f64> {
    pub sample_times: Vec<T>,
    pub mean: Vec<T>,
    pub std_error: Vec<T>,
    pub trajectories: usize,
}

/// Pairwise (cascade) summation: deterministic and accurate regardless of
/// how the per-trajectory work was scheduled.
fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Run an ensemble of generate-record -> Ito-density-filter pipelines with
/// independent RNG streams per trajectory and aggregate Re pi_t(X).
///
/// Trajectories run in parallel; results are merged in trajectory order so
/// the statistics are independent of the thread schedule. The environment
/// variable `ESTALG_THREADS` caps the worker count.
pub fn ensemble_mean_expectation<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    rho0: &Operator<T>,
    observable: &Operator<T>,
    horizon: T,
    dt: T,
    seed: u64,
    trajectories: usize,
    sample_times: &[T],
) -> Result<EnsembleStats<T>, FilterError> {
    let sample_steps: Vec<usize> = sample_times
        .iter()
        .map(|&t| (t / dt).round().as_f64() as usize)
        .collect();

    let run_one = |traj: usize| -> Result<Vec<T>, FilterError> {
        let record =
            generate_record_stream(model, scheme, rho0, horizon, dt, seed, traj as u64 + 1)?;
        let out = run_filter(
            &record,
            model,
            scheme,
            &FilterState::Density(rho0.clone()),
            Form::Ito,
            std::slice::from_ref(observable),
        )?;
        Ok(sample_steps.iter().map(|&k| out.expectations[0][k.min(out.times.len() - 1)].re).collect())
    };

    let results: Vec<Result<Vec<T>, FilterError>> = match ensemble_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(|| (0..trajectories).into_par_iter().map(run_one).collect()),
        None => (0..trajectories).into_par_iter().map(run_one).collect(),
    };
    let mut per_time: Vec<Vec<T>> = vec![Vec::with_capacity(trajectories); sample_steps.len()];
    for r in results {
        let vals = r?;
        for (i, v) in vals.into_iter().enumerate() {
            per_time[i].push(v);
        }
    }

    let n = T::cast(trajectories as f64);
    let mut mean = Vec::new();
    let mut std_error = Vec::new();
    for samples in &per_time {
        let mu = pairwise_sum(samples) / n;
        let sq: Vec<T> = samples.iter().map(|&x| (x - mu) * (x - mu)).collect();
        let var = pairwise_sum(&sq) / (n - T::one()).max(T::one());
        mean.push(mu);
        std_error.push((var / n).sqrt());
    }
    Ok(EnsembleStats {
        sample_times: sample_times.to_vec(),
        mean,
        std_error,
        trajectories,
    })
}

fn ensemble_threads() -> Option<usize> {
    std::env::var("ESTALG_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_density;
    use crate::superops::{l_unobs, zeta};

    type Op = Operator<f64>;

    fn decay_model() -> (ModelSpec<f64>, MeasurementScheme<f64>) {
        let model = ModelSpec::new(vec![Op::sigma_minus()], Op::zeros(2)).unwrap();
        let scheme = MeasurementScheme::complete(vec![0.0]);
        (model, scheme)
    }

    fn excited() -> Op {
        Op::matrix_unit(2, 0, 0)
    }

    #[test]
    fn record_without_coupling_is_pure_wiener() {
        // L = {c I} with the quadrature signal tr((M + M^dag) rho) = const:
        // easier: no signal at all when L = 0 matrix
        let model = ModelSpec::new(vec![Op::zeros(2)], Op::zeros(2)).unwrap();
        let scheme = MeasurementScheme::complete(vec![0.0]);
        let rho0 = Op::identity(2).scale_re(0.5);
        let rec = generate_record(&model, &scheme, &rho0, 0.1, 1e-3, 7).unwrap();
        for k in 0..rec.steps() {
            assert_eq!(rec.dy[0][k], rec.dw[0][k]);
        }
    }

    #[test]
    fn record_generation_is_deterministic() {
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let a = generate_record(&model, &scheme, &rho0, 0.2, 1e-3, 42).unwrap();
        let b = generate_record(&model, &scheme, &rho0, 0.2, 1e-3, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_record(&model, &scheme, &rho0, 0.2, 1e-3, 43).unwrap();
        assert!(a.dy[0] != c.dy[0]);
    }

    #[test]
    fn record_drift_matches_analytic_signal() {
        // mean of dY/dt at t = 0 over many trajectories approaches
        // tr(rho0 (L e^{i theta} + L^dag e^{-i theta}))
        let (model, scheme) = decay_model();
        let rho0 = random_density::<f64>(&mut ChaCha12Rng::seed_from_u64(1), 2);
        let quad = &Op::sigma_minus() + &Op::sigma_plus();
        let expected = linalg::trace(&rho0.mat().dot(quad.mat())).re;
        let dt = 1e-3;
        let n = 2000;
        let mut first = Vec::with_capacity(n);
        for traj in 0..n {
            let rec =
                generate_record_stream(&model, &scheme, &rho0, dt, dt, 99, traj as u64).unwrap();
            first.push(rec.dy[0][0] / dt);
        }
        let mean = pairwise_sum(&first) / n as f64;
        // Var(dY/dt) = 1/dt, std error = sqrt(1/(dt n))
        let se = (1.0 / (dt * n as f64)).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn record_rejects_bad_initial_state() {
        let (model, scheme) = decay_model();
        let not_density = Op::pauli_z(); // trace 0
        assert!(matches!(
            generate_record(&model, &scheme, &not_density, 0.1, 1e-3, 0),
            Err(FilterError::BadInitialTrace { .. })
        ));
        let negative = Op::from_fn(2, |(i, j)| {
            if i == j {
                C::new(if i == 0 { 1.5 } else { -0.5 }, 0.0)
            } else {
                C::new(0.0, 0.0)
            }
        })
        .unwrap();
        assert!(matches!(
            generate_record(&model, &scheme, &negative, 0.1, 1e-3, 0),
            Err(FilterError::NonPositiveInitial { .. })
        ));
    }

    #[test]
    fn hamiltonian_only_ito_step_is_unitary_euler() {
        // dY empty, L = {}: one Euler step of -i[H, rho]
        let h = Op::pauli_x().scale_re(0.5);
        let model = ModelSpec::new(vec![], h.clone()).unwrap();
        let scheme = MeasurementScheme::empty();
        let rho = excited();
        let dt = 1e-3;
        let next = zakai_step_ito(&FilterState::Density(rho.clone()), &model, &scheme, &[], dt)
            .unwrap();
        let expected = &rho + &h.commutator(&rho).scale(C::new(0.0, -dt));
        match next {
            FilterState::Density(out) => assert!((&out - &expected).fro_norm() < 1e-14),
            _ => panic!(),
        }
    }

    #[test]
    fn ito_step_norm_has_no_drift_term() {
        // Delta sigma_t(I) = sum_a sigma_t(L e^{i t} + L^dag e^{-i t}) dY_a;
        // with dY = 0 the norm is constant
        let (model, scheme) = decay_model();
        let rho = random_density::<f64>(&mut ChaCha12Rng::seed_from_u64(3), 2);
        let state = FilterState::Density(rho.clone());
        let next = zakai_step_ito(&state, &model, &scheme, &[0.0], 1e-3).unwrap();
        assert!((next.norm() - state.norm()).abs() < 1e-14);
        // and with dY != 0 the increment matches the quadrature expectation
        let dy = 0.02;
        let next = zakai_step_ito(&state, &model, &scheme, &[dy], 1e-3).unwrap();
        let quad = &Op::sigma_minus() + &Op::sigma_plus();
        let expected = state.norm() + linalg::trace(&rho.mat().dot(quad.mat())).re * dy;
        assert!((next.norm() - expected).abs() < 1e-13);
    }

    #[test]
    fn ito_step_matches_dual_equation_on_matrix_units() {
        // one Euler step equals direct evaluation of the dual equation
        // d sigma(X) = sigma(L_G X) dt + sum sigma(X L e^{it} + e^{-it} L^dag X) dY
        // on every matrix unit, for a 2-channel qubit model
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let model = crate::sampling::random_model::<f64>(&mut rng, 2, 2);
        let scheme = MeasurementScheme::new(vec![0, 1], vec![0.3, 1.9]).unwrap();
        let rho = random_density::<f64>(&mut rng, 2);
        let dt = 1e-3;
        let dy = [0.04, -0.02];
        let state = FilterState::Density(rho.clone());
        let next = zakai_step_ito(&state, &model, &scheme, &dy, dt).unwrap();
        let lind = lindblad(&model);
        for i in 0..2 {
            for j in 0..2 {
                let x = Op::matrix_unit(2, i, j);
                let lhs = next.sigma(&x) - state.sigma(&x);
                let mut rhs = state.sigma(&lind.apply(&x)) * re(dt);
                for ((alpha, theta), &dya) in scheme.iter().zip(&dy) {
                    let m = phased(&model.couplings()[alpha], theta);
                    let term = &(&x * &m) + &(&m.dagger() * &x);
                    rhs = rhs + state.sigma(&term) * re(dya);
                }
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn strat_and_ito_agree_on_smooth_paths() {
        // On a path of bounded variation (dW = 0 substituted) the Ito and
        // Stratonovich pure-state equations of the decay model share their
        // drift (sigma_-^2 = 0 makes K equal K(G, Theta)), so the Euler and
        // Heun integrations converge to the same flow at order dt.
        let (model, scheme) = decay_model();
        let k_i = k_ito(&model);
        let k_s = k_strat(&model, &scheme).unwrap();
        assert!((&k_i - &k_s).fro_norm() < 1e-15);

        let chi0 = Array1::from_vec(vec![
            C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ]);
        let quad = &Op::sigma_minus() + &Op::sigma_plus();
        let mut gaps = Vec::new();
        for &dt in &[2e-3, 1e-3, 5e-4] {
            let steps = (0.5 / dt) as usize;
            let mut ito = FilterState::Pure(chi0.clone());
            let mut strat = FilterState::Pure(chi0.clone());
            for _ in 0..steps {
                let n = normalize(&ito).unwrap();
                let dy = [n.expectation(&quad).re * dt];
                ito = pure_step(&ito, &model, &scheme, &dy, dt, Form::Ito).unwrap();
                strat = pure_step(&strat, &model, &scheme, &dy, dt, Form::Strat).unwrap();
            }
            let ni = normalize(&ito).unwrap();
            let ns = normalize(&strat).unwrap();
            let gap = (ni.expectation(&Op::pauli_z()).re - ns.expectation(&Op::pauli_z()).re).abs();
            gaps.push(gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
        assert!(gaps[2] < 1e-3, "gap did not vanish: {gaps:?}");
        let order = (gaps[0] / gaps[2]).log2() / 2.0;
        assert!(order > 0.8, "order {order} ({gaps:?})");

        // The density pipelines are a different story: their drifts differ
        // by the Ito correction 1/2 sum zeta*^2, which a bounded-variation
        // path does not supply, so on this path they settle on different
        // solutions. The equality of the two FORMS is a statement about
        // records with quadratic variation dt, covered by the convergence
        // and Monte-Carlo tests.
        let mut ito = FilterState::Density(excited());
        let mut strat = FilterState::Density(excited());
        let dt = 1e-3;
        for _ in 0..500 {
            let n = normalize(&ito).unwrap();
            let dy = [n.expectation(&quad).re * dt];
            ito = zakai_step_ito(&ito, &model, &scheme, &dy, dt).unwrap();
            strat = zakai_step_strat(&strat, &model, &scheme, &dy, dt).unwrap();
        }
        let ni = normalize(&ito).unwrap();
        let ns = normalize(&strat).unwrap();
        // strat keeps the dark pure state; ito relaxes toward the ground state
        assert!((ns.expectation(&Op::pauli_z()).re - 1.0).abs() < 1e-10);
        assert!((ni.expectation(&Op::pauli_z()).re - (2.0 * (-0.5f64).exp() - 1.0)).abs() < 1e-3);
    }

    #[test]
    fn strat_self_convergence_under_dt_halving() {
        // same noisy record integrated at dt and dt/2 (coarsened increments):
        // strong-order self-convergence of the final state
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let fine_dt = 2.5e-4;
        let rec = generate_record(&model, &scheme, &rho0, 0.5, fine_dt, 5).unwrap();
        let coarsen = |factor: usize| -> Vec<f64> {
            rec.dy[0].chunks(factor).map(|c| c.iter().sum()).collect()
        };
        let run_at = |factor: usize| -> Op {
            let dy = coarsen(factor);
            let dt = fine_dt * factor as f64;
            let mut state = FilterState::Density(rho0.clone());
            for &d in &dy {
                state = zakai_step_strat(&state, &model, &scheme, &[d], dt).unwrap();
                let n = state.norm();
                state = state.scale_re(1.0 / n);
            }
            match state {
                FilterState::Density(rho) => rho,
                _ => unreachable!(),
            }
        };
        let r4 = run_at(4);
        let r2 = run_at(2);
        let r1 = run_at(1);
        let d42 = (&r4 - &r2).fro_norm();
        let d21 = (&r2 - &r1).fro_norm();
        let order = (d42 / d21).log2();
        assert!(order > 0.4, "self-convergence order {order} (gaps {d42:e}, {d21:e})");
    }

    #[test]
    fn complete_homodyne_strat_drift_is_pure_zeta() {
        let (model, scheme) = decay_model();
        assert!(l_unobs(&model, &scheme).fro_norm() < 1e-15);
        let drift = strat_generator(&model, &scheme).unwrap();
        let z = zeta(&k_strat(&model, &scheme).unwrap());
        assert!((&drift - &z).fro_norm() < 1e-13);
    }

    #[test]
    fn pure_step_without_coupling_is_schroedinger() {
        let h = Op::pauli_z().scale_re(0.7);
        let model = ModelSpec::new(vec![], h.clone()).unwrap();
        let scheme = MeasurementScheme::empty();
        let chi = Array1::from_vec(vec![C::new(1.0, 0.0), C::new(0.0, 0.0)]);
        let dt = 1e-3;
        for form in [Form::Ito, Form::Strat] {
            let next = pure_step(&FilterState::Pure(chi.clone()), &model, &scheme, &[], dt, form)
                .unwrap();
            // d chi = -i H chi dt (+ O(dt^2) for the Heun form)
            let expected = &chi + &h.mat().dot(&chi).mapv(|z| z * C::new(0.0, -dt));
            match next {
                FilterState::Pure(out) => {
                    let gap: f64 = out
                        .iter()
                        .zip(expected.iter())
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    // Euler matches the first-order expansion exactly; the
                    // Heun corrector adds an O(dt^2) term
                    assert!(gap <= dt * dt, "gap {gap}");
                }
                _ => panic!(),
            }
        }
    }

    #[test]
    fn pure_strat_requires_complete_homodyne() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let model = crate::sampling::random_model::<f64>(&mut rng, 2, 2);
        let partial = MeasurementScheme::new(vec![0], vec![0.0]).unwrap();
        let chi = Array1::from_vec(vec![C::new(1.0, 0.0), C::new(0.0, 0.0)]);
        let err = pure_step(&FilterState::Pure(chi), &model, &partial, &[0.0], 1e-3, Form::Strat);
        assert!(matches!(err, Err(FilterError::StratRequiresComplete)));
    }

    #[test]
    fn pictures_agree_on_shared_record() {
        // pure and density pictures track the same expectations for pure rho0
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let rec = generate_record(&model, &scheme, &rho0, 0.5, 5e-4, 11).unwrap();
        let sz = Op::pauli_z();
        let dens = run_filter(
            &rec,
            &model,
            &scheme,
            &FilterState::Density(rho0.clone()),
            Form::Ito,
            std::slice::from_ref(&sz),
        )
        .unwrap();
        let chi0 = FilterState::pure_from_density(&rho0, 1e-10).unwrap();
        let pure = run_filter(&rec, &model, &scheme, &chi0, Form::Ito, std::slice::from_ref(&sz))
            .unwrap();
        let max_gap = dens.expectations[0]
            .iter()
            .zip(&pure.expectations[0])
            .map(|(a, b)| (a.re - b.re).abs())
            .fold(0.0f64, f64::max);
        // on a single rough record the pictures differ by the O(sqrt(dt))
        // quadratic-variation martingale of the Euler step
        assert!(max_gap < 0.12, "pictures diverged by {max_gap}");
    }

    #[test]
    fn normalize_is_scale_invariant_and_unital() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let rho = random_density::<f64>(&mut rng, 2);
        let s1 = FilterState::Density(rho.clone());
        let s2 = FilterState::Density(rho.scale_re(2.0));
        let x = Op::pauli_x();
        let n1 = normalize(&s1).unwrap();
        let n2 = normalize(&s2).unwrap();
        assert!((n1.expectation(&x) - n2.expectation(&x)).norm() < 1e-14);
        // pi(I) = 1 exactly
        assert_eq!(n1.expectation(&Op::identity(2)).re, 1.0);
        assert_eq!(n2.expectation(&Op::identity(2)).re, 1.0);
    }

    #[test]
    fn filter_expectations_stay_physical() {
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let rec = generate_record(&model, &scheme, &rho0, 1.0, 1e-3, 21).unwrap();
        let out = run_filter(
            &rec,
            &model,
            &scheme,
            &FilterState::Density(rho0),
            Form::Ito,
            &[Op::pauli_z()],
        )
        .unwrap();
        for z in &out.expectations[0] {
            assert!(z.re >= -1.0 - 1e-8 && z.re <= 1.0 + 1e-8);
            assert!(z.im.abs() < 1e-10);
        }
        assert!(out.max_negative_eig < 1e-8);
    }

    #[test]
    fn zero_horizon_emits_only_initial_expectations() {
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let rec = TrajectoryRecord {
            dt: 1e-3,
            horizon: 0.0,
            seed: 0,
            t_grid: vec![],
            dy: vec![vec![]],
            dw: vec![vec![]],
        };
        let out = run_filter(
            &rec,
            &model,
            &scheme,
            &FilterState::Density(rho0),
            Form::Ito,
            &[Op::pauli_z()],
        )
        .unwrap();
        assert_eq!(out.times.len(), 1);
        assert_eq!(out.expectations[0].len(), 1);
        assert!((out.expectations[0][0].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn replay_reproduces_filter_output() {
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let rec = generate_record(&model, &scheme, &rho0, 0.3, 1e-3, 33).unwrap();
        let run = || {
            run_filter(
                &rec,
                &model,
                &scheme,
                &FilterState::Density(rho0.clone()),
                Form::Strat,
                &[Op::pauli_z()],
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.expectations[0], b.expectations[0]);
        assert_eq!(a.sigma_norm, b.sigma_norm);
    }

    #[test]
    fn tower_property_small_ensemble() {
        // ensemble mean of pi_t(sigma_z) tracks the unconditional Lindblad
        // evolution (small version of the acceptance run)
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let sz = Op::pauli_z();
        let stats = ensemble_mean_expectation(
            &model,
            &scheme,
            &rho0,
            &sz,
            0.5,
            1e-3,
            17,
            200,
            &[0.25, 0.5],
        )
        .unwrap();
        let prop = lindblad(&model).adjoint();
        for (i, &t) in stats.sample_times.iter().enumerate() {
            let e_t = prop.expm_scaled(t).unwrap();
            let evolved = e_t.apply(&rho0);
            let expected = linalg::trace(&evolved.mat().dot(sz.mat())).re;
            let gap = (stats.mean[i] - expected).abs();
            assert!(
                gap < 3.0 * stats.std_error[i] + 2e-3,
                "t = {t}: mean {} vs {expected} (se {})",
                stats.mean[i],
                stats.std_error[i]
            );
        }
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let (model, scheme) = decay_model();
        let rho0 = excited();
        let sz = Op::pauli_z();
        let run = |threads: &str| {
            std::env::set_var("ESTALG_THREADS", threads);
            let out = ensemble_mean_expectation(
                &model, &scheme, &rho0, &sz, 0.1, 1e-3, 5, 32, &[0.1],
            )
            .unwrap();
            std::env::remove_var("ESTALG_THREADS");
            out
        };
        let a = run("1");
        let b = run("4");
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std_error, b.std_error);
    }
}
