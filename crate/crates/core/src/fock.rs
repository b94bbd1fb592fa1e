//! Operator algebra on the truncated Fock space of a single cavity mode.
//!
//! Matrices are dense and indexed in the number basis `|0>, ..., |n_max>`.
//! The Lindblad dissipator `D[r]` and the measurement superoperator `H[r]`
//! are the two building blocks of the conditional master equation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cre, lit, tol, to_f64, CMatrix, Real, C};

/// Hermiticity tolerance for density matrices (max entrywise `|rho - rho^dag|`).
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-9;
/// Most negative eigenvalue still considered a valid state.
pub const MIN_EIGENVALUE_TOL: f64 = -1e-8;
/// Truncated-norm deficit above which a coherent state triggers a warning.
pub const COHERENT_DEFICIT_WARN: f64 = 1e-6;

/// Size of the retained Fock space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertConfig {
    n_max: usize,
}

impl HilbertConfig {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidHilbert(format!("n_max must be >= 1, got {n_max}")));
        }
        Ok(Self { n_max })
    }

    /// Headroom kept above a target photon number: `max(10, ceil(6 sqrt(n* + 1)))`.
    pub fn headroom(n_star: usize) -> usize {
        let scaled = (6.0 * ((n_star + 1) as f64).sqrt()).ceil() as usize;
        scaled.max(10)
    }

    /// Default truncation for a target photon number.
    pub fn for_target(n_star: usize) -> Self {
        Self { n_max: n_star + Self::headroom(n_star) }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// The larger of two truncations.
    pub fn max_with(self, other: Self) -> Self {
        Self { n_max: self.n_max.max(other.n_max) }
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

fn check_square<T: Real>(m: &CMatrix<T>, expected: usize) -> Result<()> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, rows: m.nrows(), cols: m.ncols() });
    }
    Ok(())
}

/// Largest entrywise modulus of `m - m^dag`.
pub fn hermiticity_error<T: Real>(m: &CMatrix<T>) -> T {
    let d = m.nrows();
    let mut worst = T::zero();
    for i in 0..d {
        for j in i..d {
            let diff = m[(i, j)] - m[(j, i)].conj();
            worst = worst.max(diff.norm_sqr().sqrt());
        }
    }
    worst
}

/// An operator on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> FockOperator<T> {
    pub fn from_matrix(matrix: CMatrix<T>) -> Result<Self> {
        check_square(&matrix, matrix.nrows())?;
        Ok(Self { matrix })
    }

    pub fn zeros(cfg: HilbertConfig) -> Self {
        Self { matrix: CMatrix::zeros(cfg.dim(), cfg.dim()) }
    }

    pub fn identity(cfg: HilbertConfig) -> Self {
        Self { matrix: CMatrix::identity(cfg.dim(), cfg.dim()) }
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint() }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { matrix: self.matrix.map(|z| z * factor) }
    }

    /// Operator product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        check_square(&other.matrix, self.dim())?;
        Ok(Self { matrix: &self.matrix * &other.matrix })
    }

    pub fn hermiticity_error(&self) -> T {
        hermiticity_error(&self.matrix)
    }

    pub fn is_hermitian(&self, tolerance: T) -> bool {
        self.hermiticity_error() <= tolerance
    }
}

/// Annihilation operator with `<m|a|m+1> = sqrt(m+1)`.
pub fn annihilation<T: Real>(cfg: HilbertConfig) -> FockOperator<T> {
    let d = cfg.dim();
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d - 1 {
        m[(k, k + 1)] = cre(lit::<T>((k + 1) as f64).sqrt());
    }
    FockOperator { matrix: m }
}

pub fn creation<T: Real>(cfg: HilbertConfig) -> FockOperator<T> {
    annihilation(cfg).adjoint()
}

/// Number operator, diagonal `0, 1, ..., n_max`.
pub fn number_op<T: Real>(cfg: HilbertConfig) -> FockOperator<T> {
    let diag = DVector::from_fn(cfg.dim(), |k, _| cre(lit::<T>(k as f64)));
    FockOperator { matrix: CMatrix::from_diagonal(&diag) }
}

/// Amplitude quadrature `X = (a + a^dag) / 2`.
pub fn quadrature_x<T: Real>(cfg: HilbertConfig) -> FockOperator<T> {
    let a = annihilation::<T>(cfg);
    let half = lit::<T>(0.5);
    FockOperator { matrix: (a.matrix.adjoint() + &a.matrix).map(|z| z * half) }
}

/// Phase quadrature `P = (a - a^dag) / 2i`.
pub fn quadrature_p<T: Real>(cfg: HilbertConfig) -> FockOperator<T> {
    let a = annihilation::<T>(cfg);
    let factor = Complex::new(T::zero(), lit::<T>(-0.5));
    FockOperator { matrix: (&a.matrix - a.matrix.adjoint()).map(|z| z * factor) }
}

/// Validation report for a density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateCheck<T> {
    pub hermiticity_error: T,
    pub trace_error: T,
    pub min_eigenvalue: T,
}

/// Conditioned cavity state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Wraps a matrix after checking the Hermiticity, trace and positivity invariants.
    pub fn from_matrix(matrix: CMatrix<T>) -> Result<Self> {
        check_square(&matrix, matrix.nrows())?;
        let rho = Self { matrix };
        let check = rho.check();
        if check.hermiticity_error > tol(HERMITIAN_TOL) {
            return Err(Error::InvalidState(format!(
                "not Hermitian (error {:.3e})",
                to_f64(check.hermiticity_error)
            )));
        }
        if check.trace_error > tol(TRACE_TOL) {
            return Err(Error::InvalidState(format!(
                "trace deviates from 1 by {:.3e}",
                to_f64(check.trace_error)
            )));
        }
        if check.min_eigenvalue < -tol::<T>(-MIN_EIGENVALUE_TOL) {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:.3e}",
                to_f64(check.min_eigenvalue)
            )));
        }
        Ok(rho)
    }

    /// Wraps a matrix without validation. Used by integrators that monitor
    /// the invariants themselves.
    pub fn from_matrix_unchecked(matrix: CMatrix<T>) -> Self {
        Self { matrix }
    }

    /// Pure state `|psi><psi|` from (not necessarily normalized) amplitudes.
    pub fn from_pure(amplitudes: &[C<T>]) -> Result<Self> {
        let norm_sq = amplitudes.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr());
        if !(norm_sq > T::zero()) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|c| c / norm_sq.sqrt()));
        Ok(Self { matrix: &v * v.adjoint() })
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_max(&self) -> usize {
        self.dim() - 1
    }

    pub fn trace(&self) -> T {
        self.matrix.diagonal().iter().fold(T::zero(), |acc, z| acc + z.re)
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> T {
        // tr(rho rho) = sum |rho_ij|^2 for Hermitian rho
        self.matrix.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    /// Population of the number state `|k>`.
    pub fn population(&self, k: usize) -> Result<T> {
        if k >= self.dim() {
            return Err(Error::IndexOutOfRange { index: k, n_max: self.n_max() });
        }
        Ok(self.matrix[(k, k)].re)
    }

    /// Photon-number distribution (diagonal of `rho`).
    pub fn populations(&self) -> Vec<T> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    /// Population of the highest retained level.
    pub fn tail_population(&self) -> T {
        let k = self.n_max();
        self.matrix[(k, k)].re
    }

    /// Mean photon number, read off the diagonal.
    pub fn mean_photon_number(&self) -> T {
        self.matrix
            .diagonal()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, z)| acc + lit::<T>(k as f64) * z.re)
    }

    /// Photon-number variance, read off the diagonal.
    pub fn photon_number_variance(&self) -> T {
        let (m1, m2) = self.matrix.diagonal().iter().enumerate().fold(
            (T::zero(), T::zero()),
            |(m1, m2), (k, z)| {
                let kf = lit::<T>(k as f64);
                (m1 + kf * z.re, m2 + kf * kf * z.re)
            },
        );
        m2 - m1 * m1
    }

    pub fn hermiticity_error(&self) -> T {
        hermiticity_error(&self.matrix)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> T {
        let herm = (&self.matrix + self.matrix.adjoint()).map(|z| z * lit::<T>(0.5));
        herm.symmetric_eigenvalues().iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    /// True if every eigenvalue of the Hermitian part exceeds `-shift`,
    /// decided by an LDL^dag factorization of `rho + shift * I` with real
    /// pivots. Much cheaper than a full eigensolve.
    pub fn is_positive_within(&self, shift: T) -> bool {
        let d = self.dim();
        let mut m = (&self.matrix + self.matrix.adjoint()).map(|z| z * lit::<T>(0.5));
        for k in 0..d {
            m[(k, k)] += cre(shift);
        }
        for k in 0..d {
            let pivot = m[(k, k)].re;
            if !(pivot > T::zero()) {
                return false;
            }
            for i in k + 1..d {
                let factor = m[(i, k)] / pivot;
                for j in k + 1..=i {
                    let update = factor * m[(k, j)];
                    m[(i, j)] -= update;
                }
            }
            for i in k + 1..d {
                for j in k + 1..i {
                    m[(j, i)] = m[(i, j)].conj();
                }
            }
        }
        true
    }

    pub fn check(&self) -> StateCheck<T> {
        StateCheck {
            hermiticity_error: self.hermiticity_error(),
            trace_error: (self.trace() - T::one()).abs(),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }

    /// Overlap `<psi|rho|psi>` with a state vector.
    pub fn overlap(&self, psi: &[C<T>]) -> T {
        let d = self.dim();
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..d {
            let mut row = Complex::new(T::zero(), T::zero());
            for (j, &p) in psi.iter().enumerate().take(d) {
                row += self.matrix[(i, j)] * p;
            }
            acc += psi[i].conj() * row;
        }
        acc.re
    }
}

/// `tr(op rho)` without forming the product.
fn trace_of_product<T: Real>(op: &CMatrix<T>, rho: &CMatrix<T>) -> C<T> {
    let d = op.nrows();
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..d {
        for j in 0..d {
            acc += op[(i, j)] * rho[(j, i)];
        }
    }
    acc
}

/// Commutator `[a, b]`.
pub fn commutator<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a * b - b * a
}

/// Lindblad dissipator `D[r]rho = r rho r^dag - (r^dag r rho + rho r^dag r) / 2`.
pub fn lindblad_d<T: Real>(r: &FockOperator<T>, rho: &DensityMatrix<T>) -> Result<CMatrix<T>> {
    check_square(rho.matrix(), r.dim())?;
    let rm = &r.matrix;
    let rd = rm.adjoint();
    let rdr = &rd * rm;
    let rho = &rho.matrix;
    let half = lit::<T>(0.5);
    Ok(rm * rho * &rd - (&rdr * rho + rho * &rdr).map(|z| z * half))
}

/// Measurement superoperator `H[r]rho = r rho + rho r^dag - tr[(r + r^dag) rho] rho`.
pub fn measurement_h<T: Real>(r: &FockOperator<T>, rho: &DensityMatrix<T>) -> Result<CMatrix<T>> {
    check_square(rho.matrix(), r.dim())?;
    let rm = &r.matrix;
    let rd = rm.adjoint();
    let rho = &rho.matrix;
    let mean = trace_of_product(&(rm + &rd), rho);
    Ok(rm * rho + rho * &rd - rho.map(|z| z * mean))
}

/// Number-basis amplitudes `e^{-|amp|^2/2} amp^n / sqrt(n!)` for `n < dim`,
/// not renormalized.
pub fn coherent_amplitudes<T: Real>(amp: C<T>, dim: usize) -> Vec<C<T>> {
    let mut out = Vec::with_capacity(dim);
    let mut c = cre((-amp.norm_sqr() * lit(0.5)).exp());
    for n in 0..dim {
        out.push(c);
        c = c * amp / lit::<T>((n + 1) as f64).sqrt();
    }
    out
}

/// Normalized coherent state truncated to `cfg`. Logs a warning when the
/// discarded norm exceeds `1e-6`.
pub fn coherent_state<T: Real>(amp: C<T>, cfg: HilbertConfig) -> DensityMatrix<T> {
    let amps = coherent_amplitudes(amp, cfg.dim());
    let kept = amps.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr());
    let deficit = T::one() - kept;
    if to_f64(deficit) > COHERENT_DEFICIT_WARN {
        log::warn!(
            "coherent state |amp|^2 = {} loses {:.3e} of its norm at n_max = {}",
            amp.norm_sqr(),
            to_f64(deficit),
            cfg.n_max()
        );
    }
    DensityMatrix::from_pure(&amps).expect("coherent amplitudes have nonzero norm")
}

/// Number state `|m><m|`.
pub fn number_state<T: Real>(m: usize, cfg: HilbertConfig) -> Result<DensityMatrix<T>> {
    if m > cfg.n_max() {
        return Err(Error::IndexOutOfRange { index: m, n_max: cfg.n_max() });
    }
    let mut matrix = CMatrix::zeros(cfg.dim(), cfg.dim());
    matrix[(m, m)] = cre(T::one());
    Ok(DensityMatrix { matrix })
}

/// `tr(op rho)`.
pub fn expectation<T: Real>(op: &FockOperator<T>, rho: &DensityMatrix<T>) -> Result<C<T>> {
    check_square(rho.matrix(), op.dim())?;
    Ok(trace_of_product(&op.matrix, &rho.matrix))
}

/// `<op^2> - <op>^2` for a Hermitian operator; errors when the expectation
/// carries an imaginary part above `1e-10`.
pub fn variance<T: Real>(op: &FockOperator<T>, rho: &DensityMatrix<T>) -> Result<T> {
    let mean = expectation(op, rho)?;
    let sq = trace_of_product(&(&op.matrix * &op.matrix), &rho.matrix);
    let limit = tol::<T>(1e-10);
    for im in [mean.im, sq.im] {
        if im.abs() > limit {
            return Err(Error::NotHermitian(to_f64(im)));
        }
    }
    Ok(sq.re - mean.re * mean.re)
}

/// Operators precomputed once per Hilbert space and shared read-only by
/// every trajectory.
#[derive(Debug, Clone)]
pub struct Operators<T: Real> {
    pub cfg: HilbertConfig,
    pub a: FockOperator<T>,
    pub n: FockOperator<T>,
    pub x: FockOperator<T>,
    /// Eigenvalues of `X`.
    pub x_eigenvalues: Vec<T>,
    /// Real orthogonal eigenvectors of `X`, one per column.
    pub x_eigenvectors: DMatrix<T>,
}

impl<T: Real> Operators<T> {
    pub fn new(cfg: HilbertConfig) -> Self {
        let x = quadrature_x::<T>(cfg);
        // X is real symmetric tridiagonal
        let x_real = x.matrix().map(|z| z.re);
        let eig = x_real.symmetric_eigen();
        Self {
            cfg,
            a: annihilation(cfg),
            n: number_op(cfg),
            x,
            x_eigenvalues: eig.eigenvalues.iter().copied().collect(),
            x_eigenvectors: eig.eigenvectors,
        }
    }
}
