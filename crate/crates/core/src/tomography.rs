//! Logical state readout and reconstruction, and process tomography with a
//! Cholesky-style parameterization `chi = T† T`.
//!
//! Process-matrix convention: `E(rho) = sum_mn chi_mn s_m rho s_n` over the
//! Pauli basis `s = (I, X, Y, Z)`. Readouts use `rho = sum_k o_k s_k` with
//! `o_0 = 1/2` and `o_k = <s_k>/2`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::circuit::pauli_matrix;
use crate::error::{Error, Result};
use crate::grid::{Axis, LogicalFrame};
use crate::oscillator::{displacement_expectation, Conventions, FockVector, OscState};
use crate::C64;

/// `(Re<D(l_x/2)>, Re<D(l_y/2)>, Re<D(l_z/2)>)`.
pub fn logical_readout<S: OscState + ?Sized>(
    state: &S,
    frame: &LogicalFrame,
    conv: &Conventions,
) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (o, axis) in out.iter_mut().zip(Axis::ALL) {
        *o = displacement_expectation(state, frame.pauli_amplitude(axis), conv)?.re;
    }
    Ok(out)
}

/// `(Re<D(l_x)>, Re<D(l_z)>)`.
pub fn stabilizer_readout<S: OscState + ?Sized>(
    state: &S,
    frame: &LogicalFrame,
    conv: &Conventions,
) -> Result<(f64, f64)> {
    Ok((
        displacement_expectation(state, frame.stabilizer_amplitude(Axis::X), conv)?.re,
        displacement_expectation(state, frame.stabilizer_amplitude(Axis::Z), conv)?.re,
    ))
}

/// Readout triple measured in the Hadamard-rotated frame, mapped back to the
/// original axes: `(x, y, z) -> (z, -y, x)`.
pub fn hadamard_readout_permutation(bloch: [f64; 3]) -> [f64; 3] {
    [bloch[2], -bloch[1], bloch[0]]
}

fn to_m2(m: [[C64; 2]; 2]) -> Matrix2<C64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn pauli_basis() -> [Matrix2<C64>; 4] {
    [
        Matrix2::identity(),
        to_m2(pauli_matrix(Axis::X)),
        to_m2(pauli_matrix(Axis::Y)),
        to_m2(pauli_matrix(Axis::Z)),
    ]
}

/// Logical density matrix `(1 + x X + y Y + z Z)/2`. A Bloch vector longer
/// than one is kept as is and flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalDensity {
    pub matrix: Matrix2<C64>,
    pub bloch: [f64; 3],
    pub unphysical: bool,
}

pub fn reconstruct_state(bloch: [f64; 3]) -> LogicalDensity {
    let s = pauli_basis();
    let mut m = s[0] * C64::from(0.5);
    for k in 0..3 {
        m += s[k + 1] * C64::from(bloch[k] / 2.0);
    }
    let len = bloch.iter().map(|x| x * x).sum::<f64>().sqrt();
    LogicalDensity {
        matrix: m,
        bloch,
        unphysical: len > 1.0 + 1e-12,
    }
}

/// `<ideal|rho|ideal>` for a normalized ideal state.
pub fn state_fidelity(rho: &LogicalDensity, ideal: [C64; 2]) -> f64 {
    let v = nalgebra::Vector2::new(ideal[0], ideal[1]);
    (v.adjoint() * rho.matrix * v)[(0, 0)].re
}

pub fn bloch_vector(psi: [C64; 2]) -> [f64; 3] {
    let v = nalgebra::Vector2::new(psi[0], psi[1]);
    let s = pauli_basis();
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = (v.adjoint() * s[k + 1] * v)[(0, 0)].re;
    }
    out
}

/// Rows `(1/2, x/2, y/2, z/2)`, one per input state.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliReadout {
    rows: Vec<[f64; 4]>,
}

impl PauliReadout {
    pub fn from_bloch(bloch: &[[f64; 3]]) -> Result<Self> {
        if bloch.is_empty() {
            return Err(Error::InvalidTomography("no readout rows".into()));
        }
        if bloch.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTomography("readouts must be finite".into()));
        }
        Ok(Self {
            rows: bloch
                .iter()
                .map(|b| [0.5, b[0] / 2.0, b[1] / 2.0, b[2] / 2.0])
                .collect(),
        })
    }

    pub fn rows(&self) -> &[[f64; 4]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest amount by which any `|o_jk|`, `k > 0`, exceeds `1/2`.
    pub fn max_excess(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r[1..].iter())
            .map(|v| v.abs() - 0.5)
            .fold(0.0, f64::max)
    }
}

/// 4x4 process matrix in the basis `(I, X, Y, Z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiMatrix {
    chi: Matrix4<C64>,
}

impl ChiMatrix {
    pub fn from_matrix(chi: Matrix4<C64>) -> Self {
        Self { chi }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.chi
    }

    pub fn identity() -> Self {
        let mut chi = Matrix4::zeros();
        chi[(0, 0)] = C64::new(1.0, 0.0);
        Self { chi }
    }

    /// `chi_mn = c_m c_n*` with `U = sum_m c_m s_m`.
    pub fn from_unitary(u: &Matrix2<C64>) -> Self {
        Self::from_kraus(std::slice::from_ref(u))
    }

    pub fn from_kraus(kraus: &[Matrix2<C64>]) -> Self {
        let s = pauli_basis();
        let mut chi = Matrix4::zeros();
        for k in kraus {
            let c: Vec<C64> = s.iter().map(|sm| (sm * k).trace() / 2.0).collect();
            for m in 0..4 {
                for n in 0..4 {
                    chi[(m, n)] += c[m] * c[n].conj();
                }
            }
        }
        Self { chi }
    }

    pub fn apply(&self, rho: &Matrix2<C64>) -> Matrix2<C64> {
        let s = pauli_basis();
        let mut out = Matrix2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                out += s[m] * rho * s[n] * self.chi[(m, n)];
            }
        }
        out
    }

    /// Frobenius norm of `sum_mn chi_mn s_n s_m - 1`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let s = pauli_basis();
        let mut m = -Matrix2::<C64>::identity();
        for a in 0..4 {
            for b in 0..4 {
                m += s[b] * s[a] * self.chi[(a, b)];
            }
        }
        m.norm()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self.chi - self.chi.adjoint()).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.chi + self.chi.adjoint()) * C64::from(0.5);
        h.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Re Tr(chi chi_ideal)`.
pub fn process_fidelity(chi: &ChiMatrix, ideal: &ChiMatrix) -> f64 {
    (chi.chi * ideal.chi).trace().re
}

/// Parameters `t_1..t_16` of the lower-triangular `T` with real diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct TParams {
    pub t: [f64; 16],
}

/// Off-diagonal positions `(row, col)` of `T`, each taking two parameters.
const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 0), (2, 1), (3, 2), (2, 0), (3, 1), (3, 0)];

impl TParams {
    pub fn t_matrix(&self) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        for d in 0..4 {
            m[(d, d)] = C64::new(self.t[d], 0.0);
        }
        for (k, &(r, c)) in OFF_DIAGONAL.iter().enumerate() {
            m[(r, c)] = C64::new(self.t[4 + 2 * k], self.t[5 + 2 * k]);
        }
        m
    }

    /// Factor of a positive definite `chi`: with the exchange matrix `P`,
    /// `P chi P = C C†` gives `T = (P C P)†`.
    pub fn from_chi(chi: &Matrix4<C64>) -> Self {
        let flip = Matrix4::from_fn(|r, c| chi[(3 - r, 3 - c)]);
        let mut t = [0.0; 16];
        let Some(chol) = flip.cholesky() else {
            t[0] = 1.0;
            return Self { t };
        };
        let l = chol.l();
        let upper = Matrix4::from_fn(|r, c| l[(3 - r, 3 - c)]);
        let tm = upper.adjoint();
        for i in 0..4 {
            t[i] = tm[(i, i)].re;
        }
        for (k, &(r, c)) in OFF_DIAGONAL.iter().enumerate() {
            t[4 + 2 * k] = tm[(r, c)].re;
            t[5 + 2 * k] = tm[(r, c)].im;
        }
        Self { t }
    }

    pub fn chi(&self) -> ChiMatrix {
        let t = self.t_matrix();
        ChiMatrix::from_matrix(t.adjoint() * t)
    }

    /// `dT/dt_i`.
    fn t_derivative(i: usize) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        if i < 4 {
            m[(i, i)] = C64::new(1.0, 0.0);
        } else {
            let (r, c) = OFF_DIAGONAL[(i - 4) / 2];
            m[(r, c)] = if (i - 4).is_multiple_of(2) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 1.0)
            };
        }
        m
    }
}

fn vec_chi(chi: &Matrix4<C64>) -> DVector<C64> {
    DVector::from_fn(16, |idx, _| chi[(idx / 4, idx % 4)])
}

/// Maps `vec(chi)` (index `4m + n`) to predicted `lambda_jk = Tr(s_k E(rho_j))/2`,
/// row `4j + k`, `k = 0..4`.
pub fn build_beta(o: &PauliReadout) -> DMatrix<C64> {
    let s = pauli_basis();
    // tr4[k][m][a][n] = Tr(s_k s_m s_a s_n) / 2
    let mut tr4 = [[[[C64::new(0.0, 0.0); 4]; 4]; 4]; 4];
    for k in 0..4 {
        for m in 0..4 {
            for a in 0..4 {
                for n in 0..4 {
                    tr4[k][m][a][n] = (s[k] * s[m] * s[a] * s[n]).trace() / 2.0;
                }
            }
        }
    }
    let rows = o.len() * 4;
    DMatrix::from_fn(rows, 16, |row, col| {
        let (j, k) = (row / 4, row % 4);
        let (m, n) = (col / 4, col % 4);
        (0..4).map(|a| tr4[k][m][a][n] * o.rows[j][a]).sum()
    })
}

/// Rows of `Re Tr(s_k sum chi_mn s_n s_m) / 2` for the trace constraints.
fn constraint_map() -> DMatrix<C64> {
    let s = pauli_basis();
    DMatrix::from_fn(4, 16, |k, col| {
        let (m, n) = (col / 4, col % 4);
        (s[k] * s[n] * s[m]).trace() / 2.0
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            max_iterations: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiFit {
    pub chi: ChiMatrix,
    pub params: TParams,
    /// `|beta chi - lambda|^2` over the X, Y, Z columns.
    pub objective: f64,
    pub constraint_residual: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

struct Problem {
    data_map: DMatrix<C64>,
    data: DVector<f64>,
    constraint_map: DMatrix<C64>,
    constraint_target: DVector<f64>,
}

impl Problem {
    fn new(o: &PauliReadout, lambda: &PauliReadout) -> Self {
        let beta = build_beta(o);
        let j = o.len();
        let keep: Vec<usize> = (0..j)
            .flat_map(|j| (1..4).map(move |k| 4 * j + k))
            .collect();
        let data_map = beta.select_rows(keep.iter());
        let data = DVector::from_iterator(
            keep.len(),
            lambda.rows.iter().flat_map(|r| r[1..].iter().cloned()),
        );
        Self {
            data_map,
            data,
            constraint_map: constraint_map(),
            constraint_target: DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
        }
    }

    fn data_residual(&self, chi: &Matrix4<C64>) -> DVector<f64> {
        (&self.data_map * vec_chi(chi)).map(|x| x.re) - &self.data
    }

    fn constraint(&self, chi: &Matrix4<C64>) -> DVector<f64> {
        (&self.constraint_map * vec_chi(chi)).map(|x| x.re) - &self.constraint_target
    }

    /// Residual and Jacobian of the augmented-Lagrangian least-squares form.
    fn augmented(&self, t: &TParams, mu: f64, nu: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let tm = t.t_matrix();
        let chi = tm.adjoint() * tm;
        let rd = self.data_residual(&chi);
        let c = self.constraint(&chi);
        let nd = rd.len();
        let sq = mu.sqrt();
        let mut r = DVector::zeros(nd + 4);
        r.rows_mut(0, nd).copy_from(&rd);
        for k in 0..4 {
            r[nd + k] = sq * (c[k] + nu[k] / mu);
        }
        let mut jac = DMatrix::zeros(nd + 4, 16);
        for i in 0..16 {
            let e = TParams::t_derivative(i);
            let dchi = vec_chi(&(e.adjoint() * tm + tm.adjoint() * e));
            let dd = (&self.data_map * &dchi).map(|x| x.re);
            let dc = (&self.constraint_map * &dchi).map(|x| x.re);
            jac.view_mut((0, i), (nd, 1)).copy_from(&dd);
            for k in 0..4 {
                jac[(nd + k, i)] = sq * dc[k];
            }
        }
        (r, jac)
    }

    /// Unconstrained-sign linear inversion over Hermitian `chi`, with the
    /// trace constraints as heavily weighted rows, clipped to PSD and
    /// factored as `T†T`.
    fn linear_start(&self) -> TParams {
        let basis = hermitian_basis();
        let nd = self.data.len();
        const W: f64 = 1e4;
        let mut a = DMatrix::<f64>::zeros(nd + 4, 16);
        for (i, b) in basis.iter().enumerate() {
            let v = vec_chi(b);
            a.view_mut((0, i), (nd, 1))
                .copy_from(&(&self.data_map * &v).map(|x| x.re));
            let c = (&self.constraint_map * &v).map(|x| x.re * W);
            a.view_mut((nd, i), (4, 1)).copy_from(&c);
        }
        let mut rhs = DVector::zeros(nd + 4);
        rhs.rows_mut(0, nd).copy_from(&self.data);
        rhs.rows_mut(nd, 4)
            .copy_from(&(&self.constraint_target * W));
        let h = a
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(16));
        let mut chi = Matrix4::zeros();
        for (i, b) in basis.iter().enumerate() {
            chi += b * C64::from(h[i]);
        }
        TParams::from_chi(&psd_clip(&chi, 1e-12))
    }

    fn solve_from(&self, start: TParams, max_iterations: usize) -> ChiFit {
        let mut t = start;
        let mut mu = 10.0;
        let mut nu = DVector::<f64>::zeros(4);
        let mut last_c = f64::INFINITY;
        let mut last_decrease = f64::INFINITY;
        for _outer in 0..40 {
            let mut lambda = 1e-3;
            let (mut r, mut jac) = self.augmented(&t, mu, &nu);
            let mut f = r.norm_squared();
            for _ in 0..max_iterations {
                let jt = jac.transpose();
                let a = &jt * &jac;
                let g = &jt * &r;
                if 2.0 * g.norm() < 1e-14 {
                    last_decrease = 0.0;
                    break;
                }
                let mut accepted = false;
                for _ in 0..30 {
                    let mut damped = a.clone();
                    for d in 0..16 {
                        damped[(d, d)] += lambda * (a[(d, d)] + 1e-12);
                    }
                    let Some(chol) = damped.cholesky() else {
                        lambda *= 4.0;
                        continue;
                    };
                    let step = chol.solve(&(-&g));
                    let mut trial = t.clone();
                    for d in 0..16 {
                        trial.t[d] += step[d];
                    }
                    let (r2, j2) = self.augmented(&trial, mu, &nu);
                    let f2 = r2.norm_squared();
                    if f2 < f {
                        last_decrease = f - f2;
                        t = trial;
                        r = r2;
                        jac = j2;
                        f = f2;
                        lambda = (lambda / 3.0).max(1e-15);
                        accepted = true;
                        break;
                    }
                    lambda *= 4.0;
                }
                if !accepted || last_decrease < 1e-15 {
                    break;
                }
            }
            let tm = t.t_matrix();
            let c = self.constraint(&(tm.adjoint() * tm));
            let cn = c.norm();
            if cn < 1e-11 && last_decrease < 1e-12 {
                break;
            }
            nu += &c * mu;
            if cn > 0.25 * last_c {
                mu = (mu * 10.0).min(1e12);
            }
            last_c = cn;
        }
        let chi = t.chi();
        let rd = self.data_residual(chi.matrix());
        let c = self.constraint(chi.matrix()).norm();
        // Gradient of the data objective projected off the constraint normals.
        let (_, jac) = self.augmented(&t, 1.0, &DVector::zeros(4));
        let nd = rd.len();
        let jd = jac.rows(0, nd).into_owned();
        let jc = jac.rows(nd, 4).into_owned();
        let g = jd.transpose() * &rd * 2.0;
        let projected = project_off(&g, &jc);
        ChiFit {
            objective: rd.norm_squared(),
            constraint_residual: c,
            gradient_norm: projected.norm(),
            converged: c < 1e-8 && last_decrease < 1e-12,
            params: t,
            chi,
        }
    }
}

/// Real basis of 4x4 Hermitian matrices.
fn hermitian_basis() -> Vec<Matrix4<C64>> {
    let mut out = Vec::with_capacity(16);
    for m in 0..4 {
        let mut e = Matrix4::zeros();
        e[(m, m)] = C64::new(1.0, 0.0);
        out.push(e);
    }
    for m in 0..4 {
        for n in 0..m {
            let mut re = Matrix4::zeros();
            re[(m, n)] = C64::new(1.0, 0.0);
            re[(n, m)] = C64::new(1.0, 0.0);
            let mut im = Matrix4::zeros();
            im[(m, n)] = C64::new(0.0, 1.0);
            im[(n, m)] = C64::new(0.0, -1.0);
            out.push(re);
            out.push(im);
        }
    }
    out
}

/// Eigenvalues clipped from below at `floor`.
fn psd_clip(chi: &Matrix4<C64>, floor: f64) -> Matrix4<C64> {
    let h = (chi + chi.adjoint()) * C64::from(0.5);
    let eig = h.symmetric_eigen();
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C64::from(l.max(floor))));
    eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Removes from `g` its component in the row space of `normals`.
fn project_off(g: &DVector<f64>, normals: &DMatrix<f64>) -> DVector<f64> {
    let svd = normals.transpose().svd(true, false);
    let u = svd.u.expect("requested");
    let mut out = g.clone();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 {
            let col = u.column(k);
            out -= col * col.dot(g);
        }
    }
    out
}

/// Least-squares `chi = T†T` subject to trace preservation, from input
/// readouts `o` and output readouts `lambda` (same row layout).
pub fn fit_chi(o: &PauliReadout, lambda: &PauliReadout, opts: &FitOptions) -> Result<ChiFit> {
    if o.len() != lambda.len() {
        return Err(Error::InvalidTomography(format!(
            "{} input rows but {} output rows",
            o.len(),
            lambda.len()
        )));
    }
    if o.len() * 3 < 12 {
        return Err(Error::InvalidTomography(
            "need at least four input states to fix twelve free parameters".into(),
        ));
    }
    if opts.starts == 0 {
        return Err(Error::InvalidTomography(
            "at least one start is required".into(),
        ));
    }
    let problem = Problem::new(o, lambda);
    let fits: Vec<ChiFit> = (0..=opts.starts)
        .into_par_iter()
        .map(|k| {
            if k == opts.starts {
                return problem.solve_from(problem.linear_start(), opts.max_iterations);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
            let mut t = [0.0; 16];
            if k == 0 {
                t[0] = 1.0;
            } else {
                for v in t.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = 0.5 * z;
                }
            }
            problem.solve_from(TParams { t }, opts.max_iterations)
        })
        .collect();
    let best = fits
        .into_iter()
        .min_by(|a, b| {
            let key = |f: &ChiFit| f.objective + 1e3 * f.constraint_residual;
            key(a).total_cmp(&key(b))
        })
        .expect("at least one start");
    Ok(best)
}

/// Pauli readouts of a set of states, as tomography rows.
pub fn readout_rows<S: OscState + Sync>(
    states: &[S],
    frame: &LogicalFrame,
    conv: &Conventions,
) -> Result<Vec<[f64; 3]>> {
    states
        .par_iter()
        .map(|s| logical_readout(s, frame, conv))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessResult {
    pub inputs: Vec<[f64; 3]>,
    pub outputs: Vec<[f64; 3]>,
    pub fit: ChiFit,
    /// Fit after dividing each readout set by its mean Bloch length, which
    /// removes overall readout-level changes between inputs and outputs.
    pub normalized_fit: ChiFit,
}

/// Rows divided by their mean Bloch length.
pub fn baseline_normalized(rows: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let len = |r: &[f64; 3]| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let mean = rows.iter().map(len).sum::<f64>() / rows.len().max(1) as f64;
    if mean <= 0.0 {
        return rows.to_vec();
    }
    rows.iter().map(|r| r.map(|v| v / mean)).collect()
}

/// Reads out `inputs`, applies `process` to each, reads out again and fits.
pub fn process_tomography<F>(
    inputs: &[FockVector],
    process: F,
    frame: &LogicalFrame,
    conv: &Conventions,
    opts: &FitOptions,
) -> Result<ProcessResult>
where
    F: Fn(&FockVector) -> Result<FockVector> + Sync,
{
    let input_rows = readout_rows(inputs, frame, conv)?;
    let outputs: Vec<FockVector> = inputs.par_iter().map(&process).collect::<Result<_>>()?;
    let output_rows = readout_rows(&outputs, frame, conv)?;
    let fit = fit_chi(
        &PauliReadout::from_bloch(&input_rows)?,
        &PauliReadout::from_bloch(&output_rows)?,
        opts,
    )?;
    let normalized_fit = fit_chi(
        &PauliReadout::from_bloch(&baseline_normalized(&input_rows))?,
        &PauliReadout::from_bloch(&baseline_normalized(&output_rows))?,
        opts,
    )?;
    Ok(ProcessResult {
        inputs: input_rows,
        outputs: output_rows,
        fit,
        normalized_fit,
    })
}
