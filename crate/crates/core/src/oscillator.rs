//! Truncated Fock-space numerics.
//!
//! Phase-space convention (fixed for the whole crate): `alpha = q + i p` with
//! `q = (a + a†)/2`, `p = (a - a†)/(2i)` and `[q, p] = i/2`, so that a coherent
//! state `|alpha>` has `<q> = Re(alpha)` and `<p> = Im(alpha)`.
//!
//! Displacements are exponentials of the exact truncated generator
//! `alpha a† - alpha* a`. Writing `alpha = i beta e^{i phi}` the generator is a
//! phase rotation of `2 i beta q_N`, so `D(alpha) = R V exp(2 i beta X) V^T R†`
//! where `q_N = V X V^T` is computed once per truncation and cached in
//! [`Conventions`]. Applying a displacement to a vector is then `O(N^2)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::Mul;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const DEFAULT_FOCK_DIM: usize = 256;
pub const DEFAULT_MAX_SQUEEZE: f64 = 2.0;

/// Basis size and the fixed phase-space convention, shared by every module.
#[derive(Clone)]
pub struct Conventions {
    fock_dim: usize,
    max_squeeze: f64,
    spectrum: Arc<OnceLock<QuadratureSpectrum>>,
}

impl fmt::Debug for Conventions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Conventions")
            .field("fock_dim", &self.fock_dim)
            .field("max_squeeze", &self.max_squeeze)
            .field("convention", &"alpha = q + ip, [q,p] = i/2")
            .finish()
    }
}

impl Default for Conventions {
    fn default() -> Self {
        Self::new(DEFAULT_FOCK_DIM).expect("default Fock dimension is valid")
    }
}

impl Conventions {
    pub fn new(fock_dim: usize) -> Result<Self> {
        if fock_dim < 2 {
            return Err(Error::FockDimTooSmall(fock_dim));
        }
        Ok(Self {
            fock_dim,
            max_squeeze: DEFAULT_MAX_SQUEEZE,
            spectrum: Arc::new(OnceLock::new()),
        })
    }

    pub fn with_max_squeeze(mut self, max_squeeze: f64) -> Self {
        self.max_squeeze = max_squeeze;
        self
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn max_squeeze(&self) -> f64 {
        self.max_squeeze
    }

    /// Largest `|alpha|^2` accepted when a displacement acts on a state.
    pub fn displacement_limit(&self) -> f64 {
        self.fock_dim as f64 / 8.0
    }

    /// Largest `|alpha|^2` accepted for an expectation `<psi|D(alpha)|psi>`.
    ///
    /// The expectation only needs `D(alpha/2)|psi>` to be represented, which
    /// is four times more permissive than [`Self::displacement_limit`] halved.
    pub fn characteristic_limit(&self) -> f64 {
        self.fock_dim as f64
    }

    pub fn check_displacement(&self, alpha: C64) -> Result<()> {
        self.check_guard(alpha, self.displacement_limit())
    }

    pub(crate) fn check_guard(&self, alpha: C64, limit: f64) -> Result<()> {
        let norm_sq = alpha.norm_sqr();
        if !norm_sq.is_finite() || norm_sq > limit {
            return Err(Error::DisplacementGuard {
                norm_sq,
                limit,
                fock_dim: self.fock_dim,
            });
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.fock_dim {
            return Err(Error::DimensionMismatch {
                expected: self.fock_dim,
                found,
            });
        }
        Ok(())
    }

    pub(crate) fn spectrum(&self) -> &QuadratureSpectrum {
        self.spectrum
            .get_or_init(|| QuadratureSpectrum::new(self.fock_dim))
    }

    /// `D(alpha)|psi>` without building the dense matrix.
    pub fn displace(&self, alpha: C64, state: &FockVector) -> Result<FockVector> {
        self.check_displacement(alpha)?;
        self.check_dim(state.dim())?;
        Ok(FockVector::from_amplitudes(
            self.spectrum().displace(alpha, state.amplitudes()),
        ))
    }

    pub(crate) fn displace_raw(&self, alpha: C64, v: &DVector<C64>) -> Result<DVector<C64>> {
        self.check_displacement(alpha)?;
        self.check_dim(v.len())?;
        Ok(self.spectrum().displace(alpha, v))
    }
}

/// Spectral decomposition of the truncated position quadrature.
pub(crate) struct QuadratureSpectrum {
    nodes: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// `D(alpha) = R(phi) V e^{2 i beta X} V^T R(phi)†`, or the adjoint of that
/// for `-alpha` when `alpha` lies in the left half-plane. Splitting the plane
/// this way makes `D(alpha)† = D(-alpha)` hold to the last bit.
#[derive(Clone, Copy, Debug)]
struct DisplacementForm {
    beta: f64,
    phi: f64,
    adjoint: bool,
}

impl DisplacementForm {
    fn new(alpha: C64) -> Self {
        let canonical = alpha.re > 0.0 || (alpha.re == 0.0 && alpha.im >= 0.0);
        let alpha = if canonical { alpha } else { -alpha };
        Self {
            beta: alpha.norm(),
            phi: alpha.arg() - FRAC_PI_2,
            adjoint: !canonical,
        }
    }

    fn phase(&self, x: f64) -> C64 {
        let s = if self.adjoint { -1.0 } else { 1.0 };
        C64::from_polar(1.0, s * 2.0 * self.beta * x)
    }
}

impl QuadratureSpectrum {
    fn new(dim: usize) -> Self {
        let q = position_real(dim);
        let eig = SymmetricEigen::new(q);
        Self {
            nodes: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    fn rotate(v: &DVector<C64>, phi: f64) -> DVector<C64> {
        DVector::from_iterator(
            v.len(),
            v.iter()
                .enumerate()
                .map(|(n, &x)| x * C64::from_polar(1.0, phi * n as f64)),
        )
    }

    /// `V^T v` for complex `v` with real `V`.
    fn project(&self, v: &DVector<C64>) -> DVector<C64> {
        let re = v.map(|x| x.re);
        let im = v.map(|x| x.im);
        let pr = self.vectors.tr_mul(&re);
        let pi = self.vectors.tr_mul(&im);
        DVector::from_iterator(
            v.len(),
            pr.iter().zip(pi.iter()).map(|(&a, &b)| C64::new(a, b)),
        )
    }

    fn expand(&self, y: &DVector<C64>) -> DVector<C64> {
        let re = y.map(|x| x.re);
        let im = y.map(|x| x.im);
        let vr = &self.vectors * re;
        let vi = &self.vectors * im;
        DVector::from_iterator(
            y.len(),
            vr.iter().zip(vi.iter()).map(|(&a, &b)| C64::new(a, b)),
        )
    }

    pub(crate) fn displace(&self, alpha: C64, v: &DVector<C64>) -> DVector<C64> {
        if alpha == C64::new(0.0, 0.0) {
            return v.clone();
        }
        let form = DisplacementForm::new(alpha);
        let w = Self::rotate(v, -form.phi);
        let mut y = self.project(&w);
        for (yk, &xk) in y.iter_mut().zip(self.nodes.iter()) {
            *yk *= form.phase(xk);
        }
        Self::rotate(&self.expand(&y), form.phi)
    }

    pub(crate) fn matrix(&self, alpha: C64) -> DMatrix<C64> {
        let n = self.nodes.len();
        if alpha == C64::new(0.0, 0.0) {
            return DMatrix::identity(n, n);
        }
        let form = DisplacementForm::new(alpha);
        let mut vc = self.vectors.clone();
        let mut vs = self.vectors.clone();
        for k in 0..n {
            let ph = form.phase(self.nodes[k]);
            vc.column_mut(k).scale_mut(ph.re);
            vs.column_mut(k).scale_mut(ph.im);
        }
        let re = vc * self.vectors.transpose();
        let im = vs * self.vectors.transpose();
        DMatrix::from_fn(n, n, |m, k| {
            C64::new(re[(m, k)], im[(m, k)])
                * C64::from_polar(1.0, form.phi * (m as f64 - k as f64))
        })
    }

    /// `<psi|D(alpha)|psi>` for a pure state.
    pub(crate) fn expectation_pure(&self, alpha: C64, v: &DVector<C64>) -> C64 {
        if alpha == C64::new(0.0, 0.0) {
            return v.iter().map(|x| x.norm_sqr()).sum::<f64>().into();
        }
        let form = DisplacementForm::new(alpha);
        let y = self.project(&Self::rotate(v, -form.phi));
        y.iter()
            .zip(self.nodes.iter())
            .map(|(yk, &xk)| form.phase(xk) * yk.norm_sqr())
            .sum()
    }

    /// `Tr(rho D(alpha))` for a density matrix.
    pub(crate) fn expectation_mixed(&self, alpha: C64, rho: &DMatrix<C64>) -> C64 {
        if alpha == C64::new(0.0, 0.0) {
            return rho.trace();
        }
        let form = DisplacementForm::new(alpha);
        let n = rho.nrows();
        // R† rho R, then diag(V^T M V).
        let m = DMatrix::from_fn(n, n, |a, b| {
            rho[(a, b)] * C64::from_polar(1.0, -form.phi * (a as f64 - b as f64))
        });
        let mr = m.map(|x| x.re);
        let mi = m.map(|x| x.im);
        let vr = &mr * &self.vectors;
        let vi = &mi * &self.vectors;
        (0..n)
            .map(|k| {
                let col = self.vectors.column(k);
                let w = C64::new(col.dot(&vr.column(k)), col.dot(&vi.column(k)));
                form.phase(self.nodes[k]) * w
            })
            .sum()
    }
}

fn position_real(dim: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        let v = 0.5 * (n as f64).sqrt();
        q[(n - 1, n)] = v;
        q[(n, n - 1)] = v;
    }
    q
}

/// Pure oscillator state: amplitude of `|n>` at index `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    amps: DVector<C64>,
}

impl FockVector {
    pub fn from_amplitudes(amps: DVector<C64>) -> Self {
        Self { amps }
    }

    pub fn from_vec(amps: Vec<C64>) -> Self {
        Self::from_amplitudes(DVector::from_vec(amps))
    }

    pub fn vacuum(dim: usize) -> Self {
        Self::number_state(0, dim)
    }

    pub fn number_state(n: usize, dim: usize) -> Self {
        assert!(n < dim, "number state {n} outside truncation {dim}");
        let mut amps = DVector::zeros(dim);
        amps[n] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Normalized copy together with the squared norm it was divided by.
    /// Returns `None` for the zero vector.
    pub fn normalized(&self) -> Option<(Self, f64)> {
        let w = self.norm_sqr();
        if w <= 0.0 || !w.is_finite() {
            return None;
        }
        Some((Self::from_amplitudes(&self.amps / C64::from(w.sqrt())), w))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::from_amplitudes(&self.amps * factor)
    }

    pub fn mean_phonon_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, x)| n as f64 * x.norm_sqr())
            .sum::<f64>()
            / self.norm_sqr()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(&self.amps * self.amps.adjoint())
    }
}

/// Dense operator on the truncated oscillator space.
#[derive(Clone, Debug, PartialEq)]
pub struct OscOperator {
    matrix: DMatrix<C64>,
}

impl OscOperator {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Self {
        assert!(matrix.is_square(), "operator matrix must be square");
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix(self.matrix.adjoint())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_matrix(&self.matrix * factor)
    }

    pub fn apply(&self, state: &FockVector) -> Result<FockVector> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        Ok(FockVector::from_amplitudes(
            &self.matrix * state.amplitudes(),
        ))
    }

    /// Largest elementwise modulus of `self - other` restricted to `n, m < block`.
    pub fn block_max_diff(&self, other: &OscOperator, block: usize) -> f64 {
        let b = block.min(self.dim()).min(other.dim());
        let mut worst = 0.0f64;
        for i in 0..b {
            for j in 0..b {
                worst = worst.max((self.matrix[(i, j)] - other.matrix[(i, j)]).norm());
            }
        }
        worst
    }

    /// Spectral norm of `(self - other) P_block`, with `P_block` projecting
    /// onto `n < block`.
    pub fn block_residual(&self, other: &OscOperator, block: usize) -> f64 {
        let b = block.min(self.dim());
        let diff = (&self.matrix - &other.matrix).columns(0, b).into_owned();
        spectral_norm(&diff)
    }
}

impl Mul for &OscOperator {
    type Output = OscOperator;
    fn mul(self, rhs: &OscOperator) -> OscOperator {
        OscOperator::from_matrix(&self.matrix * &rhs.matrix)
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// Mixed oscillator state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wraps `matrix` after checking it is square and Hermitian within 1e-10.
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let rho = Self { matrix };
        let herm = rho.hermiticity_defect();
        if herm > 1e-10 {
            return Err(Error::InvalidParams(format!(
                "density matrix not Hermitian (defect {herm:.3e})"
            )));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    pub fn from_pure(state: &FockVector) -> Self {
        state.to_density()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn normalized(&self) -> Option<(Self, f64)> {
        let t = self.trace();
        if t <= 0.0 || !t.is_finite() {
            return None;
        }
        Some((Self::from_matrix_unchecked(&self.matrix / C64::from(t)), t))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::from(0.5);
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .cloned()
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm_sqr()).sum()
    }

    /// `½ ‖self − other‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.matrix - &other.matrix;
        let herm = (&diff + diff.adjoint()) * C64::from(0.5);
        0.5 * SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .map(|x| x.abs())
            .sum::<f64>()
    }

    pub fn mean_phonon_number(&self) -> f64 {
        (0..self.dim())
            .map(|n| n as f64 * self.matrix[(n, n)].re)
            .sum::<f64>()
            / self.trace()
    }

    /// Eigen-decomposition into weighted pure components, dropping weights
    /// below `cutoff`.
    pub fn pure_components(&self, cutoff: f64) -> Vec<(f64, FockVector)> {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::from(0.5);
        let eig = SymmetricEigen::new(herm);
        eig.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > cutoff)
            .map(|(k, &w)| {
                (
                    w,
                    FockVector::from_amplitudes(eig.eigenvectors.column(k).into_owned()),
                )
            })
            .collect()
    }
}

/// States that support expectation values and displacement characteristics.
pub trait OscState {
    fn dim(&self) -> usize;

    fn expectation(&self, op: &OscOperator) -> Result<C64>;

    /// `<D(alpha)>` through the cached quadrature spectrum, with no guard.
    #[doc(hidden)]
    fn displacement_expectation_raw(&self, alpha: C64, conv: &Conventions) -> C64;
}

impl OscState for FockVector {
    fn dim(&self) -> usize {
        self.amps.len()
    }

    fn expectation(&self, op: &OscOperator) -> Result<C64> {
        let v = op.apply(self)?;
        Ok(self.inner(&v))
    }

    fn displacement_expectation_raw(&self, alpha: C64, conv: &Conventions) -> C64 {
        conv.spectrum().expectation_pure(alpha, &self.amps)
    }
}

impl OscState for DensityMatrix {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn expectation(&self, op: &OscOperator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        // Tr(O rho) without forming the product.
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += op.matrix[(i, j)] * self.matrix[(j, i)];
            }
        }
        Ok(acc)
    }

    fn displacement_expectation_raw(&self, alpha: C64, conv: &Conventions) -> C64 {
        conv.spectrum().expectation_mixed(alpha, &self.matrix)
    }
}

/// `<psi|O|psi>` or `Tr(O rho)`.
pub fn expectation<S: OscState + ?Sized>(state: &S, op: &OscOperator) -> Result<C64> {
    state.expectation(op)
}

/// `<D(alpha)>` with the displacement truncation guard applied.
pub fn displacement_expectation<S: OscState + ?Sized>(
    state: &S,
    alpha: C64,
    conv: &Conventions,
) -> Result<C64> {
    conv.check_dim(state.dim())?;
    conv.check_displacement(alpha)?;
    Ok(state.displacement_expectation_raw(alpha, conv))
}

pub struct Ladder {
    pub a: OscOperator,
    pub a_dag: OscOperator,
    pub n: OscOperator,
    pub q: OscOperator,
    pub p: OscOperator,
}

pub fn ladder_operators(conv: &Conventions) -> Ladder {
    let dim = conv.fock_dim();
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let a_dag = a.adjoint();
    let num = DMatrix::from_diagonal(&DVector::from_fn(dim, |n, _| C64::new(n as f64, 0.0)));
    let q = (&a + &a_dag) * C64::new(0.5, 0.0);
    let p = (&a - &a_dag) * C64::new(0.0, -0.5);
    Ladder {
        a: OscOperator::from_matrix(a),
        a_dag: OscOperator::from_matrix(a_dag),
        n: OscOperator::from_matrix(num),
        q: OscOperator::from_matrix(q),
        p: OscOperator::from_matrix(p),
    }
}

/// Dense `D(alpha) = exp(alpha a† - alpha* a)` on the truncated space.
pub fn displacement(alpha: C64, conv: &Conventions) -> Result<OscOperator> {
    conv.check_displacement(alpha)?;
    Ok(OscOperator::from_matrix(conv.spectrum().matrix(alpha)))
}

fn squeeze_generator(r: f64, dim: usize) -> DMatrix<f64> {
    // r (a^2 - a†^2) / 2; (a^2)_{n, n+2} = sqrt((n+1)(n+2)).
    let mut g = DMatrix::zeros(dim, dim);
    for n in 0..dim.saturating_sub(2) {
        let v = 0.5 * r * (((n + 1) * (n + 2)) as f64).sqrt();
        g[(n, n + 2)] = v;
        g[(n + 2, n)] = -v;
    }
    g
}

fn check_squeeze(r: f64, conv: &Conventions) -> Result<()> {
    if !(0.0..=conv.max_squeeze()).contains(&r) {
        return Err(Error::SqueezeGuard {
            r,
            limit: conv.max_squeeze(),
        });
    }
    Ok(())
}

/// Dense `S(r) = exp(r (a^2 - a†^2)/2)` by scaling-and-squaring of the real
/// truncated generator.
pub fn squeeze(r: f64, conv: &Conventions) -> Result<OscOperator> {
    check_squeeze(r, conv)?;
    let g = squeeze_generator(r, conv.fock_dim());
    Ok(OscOperator::from_matrix(g.exp().map(|x| C64::new(x, 0.0))))
}

/// `S(r)|0>`: the action of the same truncated exponential on the vacuum,
/// evaluated by a scaled Taylor series on the sparse generator.
pub fn squeezed_vacuum(r: f64, conv: &Conventions) -> Result<FockVector> {
    check_squeeze(r, conv)?;
    let dim = conv.fock_dim();
    let apply = |v: &[f64], out: &mut [f64]| {
        for n in 0..dim {
            let mut acc = 0.0;
            if n + 2 < dim {
                acc += 0.5 * r * (((n + 1) * (n + 2)) as f64).sqrt() * v[n + 2];
            }
            if n >= 2 {
                acc -= 0.5 * r * (((n - 1) * n) as f64).sqrt() * v[n - 2];
            }
            out[n] = acc;
        }
    };
    // Row sums bound the 1-norm of the generator.
    let bound = r * dim as f64;
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    let v = expm_action_real(apply, v, bound);
    Ok(FockVector::from_vec(
        v.into_iter().map(|x| C64::new(x, 0.0)).collect(),
    ))
}

/// `exp(G) v` for a real operator given by its action, with `‖G‖ <= bound`.
fn expm_action_real<F>(apply: F, mut v: Vec<f64>, bound: f64) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let steps = bound.ceil().max(1.0) as usize;
    let scale = 1.0 / steps as f64;
    let mut term = vec![0.0; v.len()];
    let mut next = vec![0.0; v.len()];
    for _ in 0..steps {
        term.copy_from_slice(&v);
        let mut acc = v.clone();
        for k in 1..=60 {
            apply(&term, &mut next);
            let f = scale / k as f64;
            let mut tnorm = 0.0f64;
            for (t, n) in term.iter_mut().zip(next.iter()) {
                *t = n * f;
                tnorm = tnorm.max(t.abs());
            }
            for (a, t) in acc.iter_mut().zip(term.iter()) {
                *a += t;
            }
            if tnorm < 1e-18 {
                break;
            }
        }
        v = acc;
    }
    v
}

/// `Im(beta alpha*)`: the phase in `D(alpha) D(beta) = e^{2i Phi} D(beta) D(alpha)`.
pub fn commutation_phase(alpha: C64, beta: C64) -> f64 {
    (beta * alpha.conj()).im
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Commutation {
    Commute,
    AntiCommute,
    Neither,
}

pub fn classify_commutation(phase: f64) -> Commutation {
    let half_turns = phase / FRAC_PI_2;
    let nearest = half_turns.round();
    if (half_turns - nearest).abs() * FRAC_PI_2 > 1e-12 {
        return Commutation::Neither;
    }
    if (nearest as i64).rem_euclid(2) == 0 {
        Commutation::Commute
    } else {
        Commutation::AntiCommute
    }
}
