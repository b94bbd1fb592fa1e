//! Feedback-controlled stochastic master equation for continuous
//! photon-number measurement.
//!
//! The conditioned cavity state obeys
//!
//! ```text
//! d rho = -i [H_fb, rho] dt + M D[n] rho dt + kappa D[a] rho dt
//!         + sqrt(M) H[n] rho (dy - 2 eta sqrt(M) <n> dt)
//! dy    = 2 eta sqrt(M) <n> dt + sqrt(eta) dW
//! H_fb  = G e X,   e = n* - <n>
//! ```
//!
//! The filter state is the simulated state: `dW` is drawn, the photocurrent
//! is synthesized from it, and the innovation `dy - 2 eta sqrt(M) <n> dt`
//! equals `sqrt(eta) dW`.
//!
//! Two integrators are available. [`Integrator::KrausSplit`] (the default)
//! applies the measurement and cavity decay as a completely positive,
//! first-order consistent Kraus map and then the feedback drive as the
//! exact unitary `exp(-i G e X dt)` computed from the precomputed
//! eigenbasis of `X`. [`Integrator::EulerMaruyama`] is the plain explicit
//! scheme on the equation above. Both Hermitize and renormalize after every
//! step.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    coherent_state, commutator, lindblad_d, measurement_h, number_state, DensityMatrix, FockOperator,
    HilbertConfig, Operators,
};
use crate::qfunc::DistanceWeights;
use crate::rng::WienerIncrements;
use crate::scalar::{lit, to_f64, tol, CMatrix, Real};

/// Largest allowed `dt * M` (or `dt * kappa` when the measurement is off).
pub const MAX_STEP_RATE_PRODUCT: f64 = 1e-2;
/// Population of `|n_max>` above which a run is declared truncated.
pub const TAIL_POPULATION_LIMIT: f64 = 1e-6;
/// Most negative eigenvalue tolerated before a run is declared invalid.
pub const POSITIVITY_LIMIT: f64 = 1e-6;

/// Starting state of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState<T> {
    Vacuum,
    /// Coherent state with standard amplitude `re + i im` (`<n> = |amp|^2`).
    Coherent { re: T, im: T },
    Number(usize),
}

impl<T: Real> InitialState<T> {
    pub fn coherent(re: T, im: T) -> Self {
        Self::Coherent { re, im }
    }

    pub fn build(&self, cfg: HilbertConfig) -> Result<DensityMatrix<T>> {
        match *self {
            Self::Vacuum => number_state(0, cfg),
            Self::Coherent { re, im } => Ok(coherent_state(Complex::new(re, im), cfg)),
            Self::Number(m) => number_state(m, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Positivity-preserving Kraus map for measurement and decay, exact
    /// unitary for the feedback drive.
    #[default]
    KrausSplit,
    /// Explicit Euler-Maruyama on the master equation.
    EulerMaruyama,
}

/// Closed-loop rates and numerics. All rates share one time base; with
/// `measurement_strength = 1` the clock is `M t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams<T> {
    /// `M`; zero switches the measurement off.
    pub measurement_strength: T,
    pub kappa: T,
    /// Detector efficiency `eta` in `(0, 1]`.
    pub efficiency: T,
    /// Feedback DC gain `G`.
    pub gain: T,
    pub n_star: usize,
    pub dt: T,
    pub t_final: T,
    pub hilbert: HilbertConfig,
    pub seed: u64,
    pub initial_state: InitialState<T>,
    pub feedback_enabled: bool,
    pub integrator: Integrator,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    /// Times at which full states are kept for Q-function rendering.
    pub snapshot_times: Vec<T>,
}

impl<T: Real> SimParams<T> {
    /// Closed loop from vacuum with `eta = 1`, `kappa = 0`, `dt = 1e-3 / M`,
    /// horizon `M t = 10` and the default truncation for `n_star`.
    pub fn new(measurement_strength: T, gain: T, n_star: usize) -> Self {
        let m = measurement_strength;
        Self {
            measurement_strength: m,
            kappa: T::zero(),
            efficiency: T::one(),
            gain,
            n_star,
            dt: lit::<T>(1e-3) / m,
            t_final: lit::<T>(10.0) / m,
            hilbert: HilbertConfig::for_target(n_star),
            seed: 0,
            initial_state: InitialState::Vacuum,
            feedback_enabled: true,
            integrator: Integrator::KrausSplit,
            record_stride: 1,
            snapshot_times: Vec::new(),
        }
    }

    pub fn n_steps(&self) -> usize {
        to_f64(self.t_final / self.dt).round() as usize
    }

    /// Rate used to bound the step size.
    fn fastest_rate(&self) -> T {
        if self.measurement_strength > T::zero() {
            self.measurement_strength
        } else {
            self.kappa
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let finite = |x: T| to_f64(x).is_finite();
        let m = self.measurement_strength;
        if !finite(m) || m < T::zero() {
            return bad(format!("measurement strength must be finite and >= 0, got {m}"));
        }
        if !finite(self.kappa) || self.kappa < T::zero() {
            return bad(format!("kappa must be finite and >= 0, got {}", self.kappa));
        }
        if !(self.efficiency > T::zero() && self.efficiency <= T::one()) {
            return bad(format!("efficiency must lie in (0, 1], got {}", self.efficiency));
        }
        if !finite(self.gain) {
            return bad(format!("gain must be finite, got {}", self.gain));
        }
        if !(self.dt > T::zero()) || !finite(self.dt) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= T::zero()) || !finite(self.t_final) {
            return bad(format!("t_final must be >= 0, got {}", self.t_final));
        }
        let product = to_f64(self.dt * self.fastest_rate());
        if product > MAX_STEP_RATE_PRODUCT * (1.0 + 1e-9) {
            return bad(format!("dt * rate = {product:.3e} exceeds {MAX_STEP_RATE_PRODUCT:.0e}"));
        }
        let headroom = HilbertConfig::headroom(self.n_star);
        if self.n_star + headroom > self.hilbert.n_max() {
            return bad(format!(
                "n_max = {} leaves less than {headroom} levels above n* = {}",
                self.hilbert.n_max(),
                self.n_star
            ));
        }
        if let InitialState::Number(m) = self.initial_state {
            if m > self.hilbert.n_max() {
                return Err(Error::IndexOutOfRange { index: m, n_max: self.hilbert.n_max() });
            }
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        if self.snapshot_times.iter().any(|&t| !(t >= T::zero()) || !finite(t)) {
            return bad("snapshot times must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// `e = n* - tr(n rho)`.
pub fn error_signal<T: Real>(n_star: usize, rho: &DensityMatrix<T>) -> T {
    lit::<T>(n_star as f64) - rho.mean_photon_number()
}

/// `H_fb = G e X`.
pub fn feedback_hamiltonian<T: Real>(gain: T, error: T, cfg: HilbertConfig) -> FockOperator<T> {
    crate::fock::quadrature_x(cfg).scaled(gain * error)
}

/// Why a trajectory stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// `rho_{n_max, n_max}` exceeded the tail limit.
    TruncationOverflow { population: f64 },
    /// An eigenvalue fell below `-POSITIVITY_LIMIT`.
    PositivityBreach { min_eigenvalue: f64 },
    NonFinite,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TruncationOverflow { population } => {
                write!(f, "truncation overflow: tail population {population:.3e}")
            }
            Self::PositivityBreach { min_eigenvalue } => {
                write!(f, "positivity breach: eigenvalue {min_eigenvalue:.3e} (dt too large?)")
            }
            Self::NonFinite => write!(f, "non-finite state entries"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invalidation {
    pub step: usize,
    pub time: f64,
    pub reason: FailureReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics<T> {
    /// `|tr(rho) - 1|` before renormalization.
    pub trace_drift: T,
    /// Largest `|rho - rho^dag|` entry before Hermitization.
    pub hermiticity_drift: T,
    /// Exact smallest eigenvalue; only computed when the positivity test fails.
    pub min_eig_estimate: Option<T>,
    pub tail_population: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T: Real> {
    pub rho_next: DensityMatrix<T>,
    /// Photocurrent increment.
    pub dy: T,
    /// Error signal at the start of the step.
    pub error: T,
    pub diagnostics: StepDiagnostics<T>,
    pub failure: Option<FailureReason>,
}

/// Time series of one trajectory. Row `k` holds the state quantities at
/// `times[k]`, the photocurrent accumulated since the previous row (zero in
/// the first row) and the feedback drive `G e` applied from `times[k]` on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T: Real> {
    pub times: Vec<T>,
    pub dy: Vec<T>,
    pub n_est: Vec<T>,
    pub n_var: Vec<T>,
    pub distance: Vec<T>,
    pub drive: Vec<T>,
    pub final_state: DensityMatrix<T>,
    pub final_time: T,
    pub valid: bool,
    pub failure: Option<Invalidation>,
    pub snapshots: Vec<(T, DensityMatrix<T>)>,
    /// Largest pre-Hermitization asymmetry seen over the run.
    pub max_hermiticity_drift: T,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_fidelity(&self, m: usize) -> Result<T> {
        self.final_state.population(m)
    }

    pub fn final_variance(&self) -> T {
        self.final_state.photon_number_variance()
    }

    pub fn final_mean(&self) -> T {
        self.final_state.mean_photon_number()
    }
}

/// Working copy of the state as real and imaginary parts. Every Kraus
/// coefficient is real, so the measurement map acts on each part separately.
#[derive(Debug, Clone)]
struct SplitState<T: Real> {
    re: DMatrix<T>,
    im: DMatrix<T>,
}

impl<T: Real> SplitState<T> {
    fn from_density(rho: &DensityMatrix<T>) -> Self {
        let m = rho.matrix();
        Self { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    fn to_density(&self) -> DensityMatrix<T> {
        DensityMatrix::from_matrix_unchecked(self.re.zip_map(&self.im, Complex::new))
    }

    fn dim(&self) -> usize {
        self.re.nrows()
    }

    fn diag(&self, k: usize) -> T {
        self.re[(k, k)]
    }

    fn mean_and_variance(&self) -> (T, T) {
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for k in 0..self.dim() {
            let kf = lit::<T>(k as f64);
            let p = self.diag(k);
            m1 += kf * p;
            m2 += kf * kf * p;
        }
        (m1, m2 - m1 * m1)
    }

    fn trace(&self) -> T {
        (0..self.dim()).fold(T::zero(), |acc, k| acc + self.diag(k))
    }

    /// LDL^dag of `rho + shift * I` on the lower triangle, real pivots only.
    /// Same test as [`DensityMatrix::is_positive_within`] without leaving
    /// the split representation.
    fn is_positive_within(&self, shift: T, scratch: &mut SplitState<T>) -> bool {
        let d = self.dim();
        scratch.re.copy_from(&self.re);
        scratch.im.copy_from(&self.im);
        let (re, im) = (&mut scratch.re, &mut scratch.im);
        for k in 0..d {
            re[(k, k)] += shift;
        }
        for k in 0..d {
            let pivot = re[(k, k)];
            if !(pivot > T::zero()) {
                return false;
            }
            for j in k + 1..d {
                // conj(a_jk) / pivot
                let (cr, ci) = (re[(j, k)] / pivot, -im[(j, k)] / pivot);
                if cr == T::zero() && ci == T::zero() {
                    continue;
                }
                for i in j..d {
                    let (ar, ai) = (re[(i, k)], im[(i, k)]);
                    re[(i, j)] -= ar * cr - ai * ci;
                    im[(i, j)] -= ar * ci + ai * cr;
                }
            }
        }
        true
    }
}

/// Scratch buffers reused across steps of one trajectory.
#[derive(Debug, Clone)]
struct Workspace<T: Real> {
    next: SplitState<T>,
    factor: SplitState<T>,
    kraus: Vec<T>,
    phases: Vec<(T, T)>,
    tmp_re: DMatrix<T>,
    tmp_im: DMatrix<T>,
}

impl<T: Real> Workspace<T> {
    fn new(dim: usize) -> Self {
        let z = DMatrix::zeros(dim, dim);
        Self {
            next: SplitState { re: z.clone(), im: z.clone() },
            factor: SplitState { re: z.clone(), im: z.clone() },
            kraus: vec![T::zero(); dim],
            phases: vec![(T::one(), T::zero()); dim],
            tmp_re: z.clone(),
            tmp_im: z,
        }
    }
}

/// Integrator bound to one parameter set. Cheap to share between threads.
#[derive(Debug, Clone)]
pub struct Engine<T: Real> {
    params: SimParams<T>,
    ops: Arc<Operators<T>>,
    weights: DistanceWeights<T>,
    levels: Vec<T>,
    /// `sqrt((k + 1))` for the decay shift.
    ladder: Vec<T>,
    /// Transposed eigenvectors of `X`.
    x_eigenvectors_t: DMatrix<T>,
}

impl<T: Real> Engine<T> {
    pub fn new(params: SimParams<T>) -> Result<Self> {
        let ops = Arc::new(Operators::new(params.hilbert));
        Self::with_operators(params, ops)
    }

    /// Builds an engine around operators shared with other engines.
    pub fn with_operators(params: SimParams<T>, ops: Arc<Operators<T>>) -> Result<Self> {
        params.validate()?;
        if ops.cfg != params.hilbert {
            return Err(Error::InvalidParams("operators built for a different Hilbert space".into()));
        }
        let dim = params.hilbert.dim();
        Ok(Self {
            weights: DistanceWeights::new(params.n_star, dim),
            levels: (0..dim).map(|k| lit(k as f64)).collect(),
            ladder: (0..dim).map(|k| lit::<T>((k + 1) as f64).sqrt()).collect(),
            x_eigenvectors_t: ops.x_eigenvectors.transpose(),
            params,
            ops,
        })
    }

    pub fn params(&self) -> &SimParams<T> {
        &self.params
    }

    pub fn operators(&self) -> &Arc<Operators<T>> {
        &self.ops
    }

    pub fn distance_weights(&self) -> &DistanceWeights<T> {
        &self.weights
    }

    pub fn initial_state(&self) -> Result<DensityMatrix<T>> {
        self.params.initial_state.build(self.params.hilbert)
    }

    fn drive(&self, mean: T) -> T {
        if self.params.feedback_enabled {
            self.params.gain * (lit::<T>(self.params.n_star as f64) - mean)
        } else {
            T::zero()
        }
    }

    /// Photocurrent increment `2 eta sqrt(M) <n> dt + sqrt(eta) dW`.
    fn photocurrent(&self, mean: T, dw: T) -> T {
        let p = &self.params;
        lit::<T>(2.0) * p.efficiency * p.measurement_strength.sqrt() * mean * p.dt + p.efficiency.sqrt() * dw
    }

    /// Kraus map for measurement and decay, written into `ws.next`:
    ///
    /// ```text
    /// K = 1 - (M n^2 + kappa n) dt / 2 + sqrt(eta M) n dY + eta M n^2 (dY^2 - dt) / 2
    /// rho' = K rho K + (1 - eta) M dt n rho n + kappa dt a rho a^dag
    /// ```
    ///
    /// with the normalized record `dY = 2 sqrt(eta M) <n> dt + dW`.
    fn kraus_measurement(&self, state: &SplitState<T>, mean: T, dw: T, ws: &mut Workspace<T>) {
        let p = &self.params;
        let half = lit::<T>(0.5);
        let (m, kappa, eta, dt) = (p.measurement_strength, p.kappa, p.efficiency, p.dt);
        let s = (eta * m).sqrt();
        let dy_norm = lit::<T>(2.0) * s * mean * dt + dw;
        let ito = dy_norm * dy_norm - dt;
        let mut k = std::mem::take(&mut ws.kraus);
        for (kn, &n) in k.iter_mut().zip(&self.levels) {
            *kn = T::one() - half * (m * n * n + kappa * n) * dt + s * n * dy_norm + half * eta * m * n * n * ito;
        }
        let lossy = (T::one() - eta) * m * dt;
        let decay = kappa * dt;
        let d = state.dim();
        for j in 0..d {
            for i in 0..d {
                let mut c = k[i] * k[j];
                if lossy != T::zero() {
                    c += lossy * self.levels[i] * self.levels[j];
                }
                let mut re = c * state.re[(i, j)];
                let mut im = c * state.im[(i, j)];
                if decay != T::zero() && i + 1 < d && j + 1 < d {
                    let w = decay * self.ladder[i] * self.ladder[j];
                    re += w * state.re[(i + 1, j + 1)];
                    im += w * state.im[(i + 1, j + 1)];
                }
                ws.next.re[(i, j)] = re;
                ws.next.im[(i, j)] = im;
            }
        }
        ws.kraus = k;
    }

    /// `rho <- exp(-i theta X) rho exp(i theta X)` via the eigenbasis of `X`.
    fn feedback_unitary(&self, theta: T, ws: &mut Workspace<T>) {
        let v = &self.ops.x_eigenvectors;
        let vt = &self.x_eigenvectors_t;
        let Workspace { next, tmp_re, tmp_im, phases, .. } = ws;
        // sigma = V^T rho V, one real part at a time
        tmp_re.gemm(T::one(), vt, &next.re, T::zero());
        next.re.gemm(T::one(), tmp_re, v, T::zero());
        tmp_im.gemm(T::one(), vt, &next.im, T::zero());
        next.im.gemm(T::one(), tmp_im, v, T::zero());
        // exp(-i theta (l_j - l_k)) = u_j conj(u_k) with u_j = exp(-i theta l_j)
        let d = next.dim();
        for (u, &l) in phases.iter_mut().zip(&self.ops.x_eigenvalues) {
            let (sin, cos) = (-theta * l).sin_cos();
            *u = (cos, sin);
        }
        for k in 0..d {
            let (ck, sk) = (phases[k].0, -phases[k].1);
            for (j, &(cj, sj)) in phases.iter().enumerate().take(d) {
                let (cos, sin) = (cj * ck - sj * sk, cj * sk + sj * ck);
                let (a, b) = (next.re[(j, k)], next.im[(j, k)]);
                next.re[(j, k)] = a * cos - b * sin;
                next.im[(j, k)] = a * sin + b * cos;
            }
        }
        tmp_re.gemm(T::one(), v, &next.re, T::zero());
        next.re.gemm(T::one(), tmp_re, vt, T::zero());
        tmp_im.gemm(T::one(), v, &next.im, T::zero());
        next.im.gemm(T::one(), tmp_im, vt, T::zero());
    }

    /// Euler-Maruyama increment of the full master equation, written into `ws.next`.
    fn euler_maruyama(&self, state: &SplitState<T>, drive: T, dw: T, ws: &mut Workspace<T>) {
        let p = &self.params;
        let rho = state.to_density();
        let dt = Complex::new(p.dt, T::zero());
        let mut incr: CMatrix<T> = CMatrix::zeros(state.dim(), state.dim());
        if drive != T::zero() {
            let h = self.ops.x.matrix().map(|z| z * drive);
            incr += commutator(&h, rho.matrix()).map(|z| z * Complex::new(T::zero(), -p.dt));
        }
        if p.measurement_strength > T::zero() {
            let d_n = lindblad_d(&self.ops.n, &rho).expect("matching dimensions");
            incr += d_n.map(|z| z * dt * p.measurement_strength);
            let innovation = p.efficiency.sqrt() * dw;
            let h_n = measurement_h(&self.ops.n, &rho).expect("matching dimensions");
            incr += h_n.map(|z| z * p.measurement_strength.sqrt() * innovation);
        }
        if p.kappa > T::zero() {
            let d_a = lindblad_d(&self.ops.a, &rho).expect("matching dimensions");
            incr += d_a.map(|z| z * dt * p.kappa);
        }
        let next = rho.matrix() + incr;
        ws.next.re = next.map(|z| z.re);
        ws.next.im = next.map(|z| z.im);
    }

    /// Advances `state` by one step and returns (dy, error, diagnostics, failure).
    fn advance(
        &self,
        state: &mut SplitState<T>,
        dw: T,
        ws: &mut Workspace<T>,
    ) -> (T, T, StepDiagnostics<T>, Option<FailureReason>) {
        let p = &self.params;
        let (mean, _) = state.mean_and_variance();
        let error = lit::<T>(p.n_star as f64) - mean;
        let drive = self.drive(mean);
        let dy = self.photocurrent(mean, dw);

        match p.integrator {
            Integrator::KrausSplit => {
                self.kraus_measurement(state, mean, dw, ws);
                if drive != T::zero() {
                    self.feedback_unitary(drive * p.dt, ws);
                }
            }
            Integrator::EulerMaruyama => self.euler_maruyama(state, drive, dw, ws),
        }

        // Hermitize and renormalize
        let d = state.dim();
        let half = lit::<T>(0.5);
        let mut herm_drift = T::zero();
        let trace = ws.next.trace();
        for j in 0..d {
            for i in 0..=j {
                let (a_re, a_im) = (ws.next.re[(i, j)], ws.next.im[(i, j)]);
                let (b_re, b_im) = (ws.next.re[(j, i)], ws.next.im[(j, i)]);
                let dr = a_re - b_re;
                let di = a_im + b_im;
                herm_drift = herm_drift.max((dr * dr + di * di).sqrt());
                let re = half * (a_re + b_re) / trace;
                let im = half * (a_im - b_im) / trace;
                state.re[(i, j)] = re;
                state.re[(j, i)] = re;
                state.im[(i, j)] = im;
                state.im[(j, i)] = -im;
            }
        }

        let tail = state.diag(d - 1);
        let mut diagnostics = StepDiagnostics {
            trace_drift: (trace - T::one()).abs(),
            hermiticity_drift: herm_drift,
            min_eig_estimate: None,
            tail_population: tail,
        };
        let finite = state.re.iter().chain(state.im.iter()).all(|x| to_f64(*x).is_finite());
        let failure = if !finite || !to_f64(trace).is_finite() {
            Some(FailureReason::NonFinite)
        } else if tail > tol(TAIL_POPULATION_LIMIT) {
            Some(FailureReason::TruncationOverflow { population: to_f64(tail) })
        } else {
            // single precision cannot resolve eigenvalues near 1e-6 at this size
            let limit = tol::<T>(POSITIVITY_LIMIT).max(lit::<T>(d as f64) * tol::<T>(0.0));
            if state.is_positive_within(limit, &mut ws.factor) {
                None
            } else {
                let min = state.to_density().min_eigenvalue();
                diagnostics.min_eig_estimate = Some(min);
                Some(FailureReason::PositivityBreach { min_eigenvalue: to_f64(min) })
            }
        };
        (dy, error, diagnostics, failure)
    }

    /// One integration step from `rho` with Wiener increment `dw`.
    pub fn step(&self, rho: &DensityMatrix<T>, dw: T) -> Result<StepResult<T>> {
        if rho.dim() != self.params.hilbert.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.params.hilbert.dim(),
                rows: rho.dim(),
                cols: rho.dim(),
            });
        }
        let mut state = SplitState::from_density(rho);
        let mut ws = Workspace::new(rho.dim());
        let (dy, error, diagnostics, failure) = self.advance(&mut state, dw, &mut ws);
        Ok(StepResult { rho_next: state.to_density(), dy, error, diagnostics, failure })
    }

    /// Integrates from the initial state, drawing one increment per step
    /// from `noise`.
    pub fn run(&self, mut noise: impl FnMut() -> T) -> Result<TrajectoryRecord<T>> {
        let p = &self.params;
        let n_steps = p.n_steps();
        let stride = p.record_stride;
        let capacity = n_steps / stride + 2;
        let mut rec = TrajectoryRecord {
            times: Vec::with_capacity(capacity),
            dy: Vec::with_capacity(capacity),
            n_est: Vec::with_capacity(capacity),
            n_var: Vec::with_capacity(capacity),
            distance: Vec::with_capacity(capacity),
            drive: Vec::with_capacity(capacity),
            final_state: self.initial_state()?,
            final_time: T::zero(),
            valid: true,
            failure: None,
            snapshots: Vec::new(),
            max_hermiticity_drift: T::zero(),
        };
        let mut snapshots: Vec<T> = p.snapshot_times.clone();
        snapshots.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
        let mut next_snapshot = 0;
        let half_dt = p.dt * lit(0.5);

        let mut state = SplitState::from_density(&rec.final_state);
        let mut ws = Workspace::new(state.dim());
        let mut dy_acc = T::zero();

        let record = |rec: &mut TrajectoryRecord<T>, state: &SplitState<T>, t: T, dy: T| {
            let (mean, var) = state.mean_and_variance();
            rec.times.push(t);
            rec.dy.push(dy);
            rec.n_est.push(mean);
            rec.n_var.push(var);
            rec.distance.push(self.weights.evaluate((0..state.dim()).map(|k| state.diag(k))));
            rec.drive.push(self.drive(mean));
        };

        record(&mut rec, &state, T::zero(), T::zero());
        let take_snapshots = |rec: &mut TrajectoryRecord<T>, state: &SplitState<T>, t: T, next: &mut usize| {
            while *next < snapshots.len() && t >= snapshots[*next] - half_dt {
                rec.snapshots.push((t, state.to_density()));
                *next += 1;
            }
        };
        take_snapshots(&mut rec, &state, T::zero(), &mut next_snapshot);

        for step in 1..=n_steps {
            let dw = noise();
            let (dy, _error, diag, failure) = self.advance(&mut state, dw, &mut ws);
            let t = lit::<T>(step as f64) * p.dt;
            dy_acc += dy;
            rec.max_hermiticity_drift = rec.max_hermiticity_drift.max(diag.hermiticity_drift);
            if let Some(reason) = failure {
                record(&mut rec, &state, t, dy_acc);
                rec.valid = false;
                rec.failure = Some(Invalidation { step, time: to_f64(t), reason });
                rec.final_time = t;
                rec.final_state = state.to_density();
                log::debug!("trajectory invalidated at step {step}: {reason}");
                return Ok(rec);
            }
            if step % stride == 0 || step == n_steps {
                record(&mut rec, &state, t, dy_acc);
                dy_acc = T::zero();
            }
            take_snapshots(&mut rec, &state, t, &mut next_snapshot);
        }
        rec.final_time = lit::<T>(n_steps as f64) * p.dt;
        rec.final_state = state.to_density();
        Ok(rec)
    }

    /// Trajectory driven by stream `index` of the parameter seed.
    pub fn run_stream(&self, index: u64) -> Result<TrajectoryRecord<T>> {
        self.run_seeded(self.params.seed, index)
    }

    pub(crate) fn run_seeded(&self, seed: u64, index: u64) -> Result<TrajectoryRecord<T>> {
        let mut w = WienerIncrements::new(seed, index, to_f64(self.params.dt));
        self.run(|| w.sample())
    }
}

/// One step of the conditioned dynamics. Builds the operators on every call;
/// use [`Engine::step`] in loops.
pub fn step<T: Real>(rho: &DensityMatrix<T>, params: &SimParams<T>, dw: T) -> Result<StepResult<T>> {
    Engine::new(params.clone())?.step(rho, dw)
}

/// Full trajectory from `params`, seed-deterministic (stream 0 of `params.seed`).
pub fn simulate_trajectory<T: Real>(params: &SimParams<T>) -> Result<TrajectoryRecord<T>> {
    Engine::new(params.clone())?.run_stream(0)
}

/// Trajectory driven by explicit Wiener increments, one per step.
pub fn simulate_with_increments<T: Real>(params: &SimParams<T>, increments: &[T]) -> Result<TrajectoryRecord<T>> {
    let engine = Engine::new(params.clone())?;
    if increments.len() < params.n_steps() {
        return Err(Error::InvalidParams(format!(
            "{} increments supplied for {} steps",
            increments.len(),
            params.n_steps()
        )));
    }
    let mut it = increments.iter().copied();
    engine.run(|| it.next().expect("length checked"))
}
