//! Characteristic function scans, DFT marginals, Wigner function and
//! bootstrap error bars.
//!
//! With `alpha = q + ip` one has `D(i beta) = exp(2 i beta q)` and
//! `D(beta) = exp(-2 i beta p)` for real `beta`, so
//! `P(q) = (1/pi) ∫ chi(i beta) e^{-2 i beta q} d beta` and
//! `P(p) = (1/pi) ∫ chi(beta) e^{2 i beta p} d beta`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{Conventions, DensityMatrix, FockVector, OscState};
use crate::C64;

/// `Tr(rho D(alpha))`, guarded by `|alpha|^2 <= N`.
pub fn char_function<S: OscState + ?Sized>(
    state: &S,
    alpha: C64,
    conv: &Conventions,
) -> Result<C64> {
    conv.check_dim(state.dim())?;
    conv.check_guard(alpha, conv.characteristic_limit())?;
    Ok(state.displacement_expectation_raw(alpha, conv))
}

/// `chi(t * axis)` on a grid of `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharScan {
    pub axis: C64,
    pub t_values: Vec<f64>,
    pub values: Vec<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<Vec<u64>>,
}

pub fn char_scan<S: OscState + Sync + ?Sized>(
    state: &S,
    axis: C64,
    t_values: &[f64],
    conv: &Conventions,
) -> Result<CharScan> {
    let values = t_values
        .par_iter()
        .map(|&t| char_function(state, axis * t, conv))
        .collect::<Result<Vec<_>>>()?;
    Ok(CharScan {
        axis,
        t_values: t_values.to_vec(),
        values,
        shots: None,
    })
}

/// `n` evenly spaced points on `[start, end]`.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|k| start + (end - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Q,
    P,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum QualityFlag {
    /// Density dipped below `-1e-3`.
    NegativeRipple(f64),
    /// Trapezoid integral outside `[0.98, 1.02]`.
    Normalization(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub quadrature: Quadrature,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub integral: f64,
    pub min_density: f64,
    /// `|sum |x|^2 - sum |X|^2 / M|`, relative to the input power.
    pub parseval_defect: f64,
    pub flags: Vec<QualityFlag>,
}

impl Marginal {
    /// Linear interpolation of the density at `x` (zero outside the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
        let (x0, x1) = (g[k - 1], g[k]);
        let w = (x - x0) / (x1 - x0);
        self.density[k - 1] * (1.0 - w) + self.density[k] * w
    }

    /// `(mean, variance)` by trapezoid quadrature of the normalized density.
    pub fn moments(&self) -> (f64, f64) {
        let m0 = trapezoid(&self.grid, &self.density, |_| 1.0);
        let m1 = trapezoid(&self.grid, &self.density, |x| x) / m0;
        let m2 = trapezoid(&self.grid, &self.density, |x| (x - m1) * (x - m1)) / m0;
        (m1, m2)
    }
}

fn trapezoid(x: &[f64], y: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] * f(xs[0]) + ys[1] * f(xs[1])))
        .sum()
}

pub const DEFAULT_PADDING: usize = 8;

/// Zero-padded DFT of a uniform scan. `P(q)` needs a scan along the
/// imaginary axis, `P(p)` along the real axis.
pub fn marginal_from_scan(scan: &CharScan, target: Quadrature, padding: usize) -> Result<Marginal> {
    let n = scan.t_values.len();
    if n < 2 || scan.values.len() != n {
        return Err(Error::InvalidScan(format!(
            "need at least two points with matching values ({} t, {} values)",
            n,
            scan.values.len()
        )));
    }
    if padding == 0 {
        return Err(Error::InvalidScan("padding factor must be >= 1".into()));
    }
    let scale = scan.axis.norm();
    let dir = scan.axis / scale;
    let sign = match target {
        Quadrature::Q if dir.re.abs() < 1e-12 => dir.im.signum(),
        Quadrature::P if dir.im.abs() < 1e-12 => dir.re.signum(),
        _ => {
            return Err(Error::InvalidScan(format!(
                "{target:?} marginal needs a scan along the {} axis",
                if target == Quadrature::Q {
                    "imaginary"
                } else {
                    "real"
                }
            )))
        }
    };
    let dt = scan.t_values[1] - scan.t_values[0];
    let uniform = scan
        .t_values
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1e-300));
    if !uniform || dt <= 0.0 {
        return Err(Error::InvalidScan(
            "t grid must be uniform and increasing".into(),
        ));
    }
    // Integration variable s with P(x) = (1/pi) ∫ f(s) e^{-2 i s x} ds:
    // for q, s = beta and f = chi(i beta); for p, s = -beta and f = chi(beta).
    let (s0, ds, samples): (f64, f64, Vec<C64>) = match target {
        Quadrature::Q => (
            sign * scale * scan.t_values[0],
            sign * scale * dt,
            scan.values.clone(),
        ),
        Quadrature::P => (
            -sign * scale * scan.t_values[0],
            -sign * scale * dt,
            scan.values.clone(),
        ),
    };
    let m = n * padding;
    let mut buf = vec![C64::new(0.0, 0.0); m];
    buf[..n].copy_from_slice(&samples);
    let power_in: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let power_out: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
    let parseval_defect = (power_in - power_out).abs() / power_in.max(1e-300);

    // Bin k sits at x_k = pi k / (M ds), k in (-M/2, M/2].
    let half = m as i64 / 2;
    let mut pts: Vec<(f64, f64)> = (0..m as i64)
        .map(|k| {
            let kk = if k > half { k - m as i64 } else { k };
            let x = PI * kk as f64 / (m as f64 * ds);
            let phase = C64::from_polar(1.0, -2.0 * s0 * x);
            let v = buf[k as usize] * phase * (ds.abs() / PI);
            (x, v.re)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grid: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let density: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let integral = trapezoid(&grid, &density, |_| 1.0);
    let min_density = density.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut flags = Vec::new();
    if min_density < -1e-3 {
        flags.push(QualityFlag::NegativeRipple(min_density));
    }
    if !(0.98..=1.02).contains(&integral) {
        flags.push(QualityFlag::Normalization(integral));
    }
    Ok(Marginal {
        quadrature: target,
        grid,
        density,
        integral,
        min_density,
        parseval_defect,
        flags,
    })
}

/// `W(q, p) = (2/pi) Tr(rho D(alpha) Pi D(-alpha))`, rows indexed by `q`.
pub fn wigner(
    rho: &DensityMatrix,
    q_grid: &[f64],
    p_grid: &[f64],
    conv: &Conventions,
) -> Result<DMatrix<f64>> {
    conv.check_dim(rho.dim())?;
    for &q in q_grid {
        for &p in p_grid {
            conv.check_displacement(C64::new(q, p))?;
        }
    }
    let components = rho.pure_components(1e-14);
    let points: Vec<(usize, usize)> = (0..q_grid.len())
        .flat_map(|i| (0..p_grid.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&(i, j)| {
            let alpha = C64::new(q_grid[i], p_grid[j]);
            components
                .iter()
                .map(|(w, psi)| w * displaced_parity(psi, alpha, conv))
                .sum::<f64>()
                * (2.0 / PI)
        })
        .collect();
    Ok(DMatrix::from_fn(q_grid.len(), p_grid.len(), |i, j| {
        values[i * p_grid.len() + j]
    }))
}

pub fn wigner_pure(
    psi: &FockVector,
    q_grid: &[f64],
    p_grid: &[f64],
    conv: &Conventions,
) -> Result<DMatrix<f64>> {
    wigner(&psi.to_density(), q_grid, p_grid, conv)
}

fn displaced_parity(psi: &FockVector, alpha: C64, conv: &Conventions) -> f64 {
    let moved = conv.spectrum().displace(-alpha, psi.amplitudes());
    moved
        .iter()
        .enumerate()
        .map(|(n, a)| {
            if n % 2 == 0 {
                a.norm_sqr()
            } else {
                -a.norm_sqr()
            }
        })
        .sum()
}

/// Binary outcome counts at one scan point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub successes: u64,
    pub shots: u64,
}

/// Bootstrap standard error of the success fraction at each point.
/// Resampling `shots` records with replacement is a binomial draw with the
/// observed fraction, which is what is sampled here.
pub fn bootstrap_errors(records: &[ShotRecord], resamples: usize, seed: u64) -> Result<Vec<f64>> {
    if resamples < 100 {
        return Err(Error::InvalidParams(format!(
            "bootstrap needs at least 100 resamples, got {resamples}"
        )));
    }
    records
        .par_iter()
        .enumerate()
        .map(|(idx, rec)| {
            if rec.successes > rec.shots {
                return Err(Error::InvalidParams(format!(
                    "point {idx}: {} successes out of {} shots",
                    rec.successes, rec.shots
                )));
            }
            if rec.shots == 0 {
                return Ok(f64::NAN);
            }
            let p = rec.successes as f64 / rec.shots as f64;
            let dist =
                Binomial::new(rec.shots, p).map_err(|e| Error::InvalidParams(e.to_string()))?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let draws: Vec<f64> = (0..resamples)
                .map(|_| dist.sample(&mut rng) as f64 / rec.shots as f64)
                .collect();
            let mean = draws.iter().sum::<f64>() / resamples as f64;
            let var =
                draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (resamples - 1) as f64;
            Ok(var.sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{codeword, Codeword, GridParams};
    use crate::oscillator::{ladder_operators, squeezed_vacuum};

    fn conv(n: usize) -> Conventions {
        Conventions::new(n).unwrap()
    }

    /// Hermite-function position wavefunction `<q|n>` for `[q, p] = i/2`,
    /// built by the three-term recurrence.
    fn position_wavefunctions(x: f64, dim: usize) -> Vec<f64> {
        // <q|n> = (2/pi)^{1/4} h_n(sqrt(2) q) with orthonormal Hermite functions h_n.
        let y = 2f64.sqrt() * x;
        let mut h = vec![0.0; dim];
        h[0] = PI.powf(-0.25) * (-y * y / 2.0).exp();
        if dim > 1 {
            h[1] = 2f64.sqrt() * y * h[0];
        }
        for n in 2..dim {
            h[n] = (2.0 / n as f64).sqrt() * y * h[n - 1]
                - ((n - 1) as f64 / n as f64).sqrt() * h[n - 2];
        }
        let s = 2f64.sqrt().sqrt();
        h.iter().map(|v| v * s).collect()
    }

    /// `|<q|psi>|^2`, or `|<p|psi>|^2` using `<p|n> = (-i)^n <q=p|n>`.
    fn direct_marginal(psi: &FockVector, x: f64, target: Quadrature) -> f64 {
        let basis = position_wavefunctions(x, psi.dim());
        let amp: C64 = psi
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, a)| {
                let ph = match target {
                    Quadrature::Q => C64::new(1.0, 0.0),
                    Quadrature::P => C64::new(0.0, -1.0).powu(n as u32),
                };
                a * ph.conj() * basis[n]
            })
            .sum();
        amp.norm_sqr()
    }

    #[test]
    fn vacuum_char_function() {
        let c = conv(32);
        let vac = FockVector::vacuum(32);
        let v = char_function(&vac, C64::new(1.0, 0.0), &c).unwrap();
        assert!((v.re - (-0.5f64).exp()).abs() < 1e-12);
        assert!((char_function(&vac, C64::new(0.0, 0.0), &c).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn squeezed_real_axis_char_function() {
        let c = conv(256);
        let sv = squeezed_vacuum(0.9, &c).unwrap();
        for a in [0.1, 0.3, 0.5, 0.8] {
            let v = char_function(&sv, C64::new(a, 0.0), &c).unwrap();
            assert!((v.re - (-a * a * 1.8f64.exp() / 2.0).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn char_function_guard() {
        let c = conv(16);
        let vac = FockVector::vacuum(16);
        assert!(char_function(&vac, C64::new(4.0, 0.0), &c).is_ok());
        assert!(matches!(
            char_function(&vac, C64::new(4.1, 0.0), &c),
            Err(Error::DisplacementGuard { .. })
        ));
    }

    #[test]
    fn hermitian_symmetry() {
        let c = conv(64);
        let p = GridParams::new(1.8, 0.5, [(0, 1.0), (1, 0.5)].into()).unwrap();
        let psi = codeword(&p, Codeword::One, &c).unwrap();
        for alpha in [C64::new(0.3, 1.1), C64::new(-2.0, 0.4), C64::new(0.0, -1.7)] {
            let a = char_function(&psi, alpha, &c).unwrap();
            let b = char_function(&psi, -alpha, &c).unwrap();
            assert!((a - b.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn hermite_oracle_sanity() {
        // q^2 moment of |1> from the oracle wavefunction.
        let mut acc = 0.0;
        let h = 1e-3;
        let mut x = -8.0;
        while x < 8.0 {
            let w = position_wavefunctions(x, 2)[1];
            acc += w * w * x * x * h;
            x += h;
        }
        assert!((acc - 0.75).abs() < 1e-6);
        let l = ladder_operators(&conv(4));
        assert!(l.q.matrix()[(0, 1)].re > 0.0);
    }

    #[test]
    fn squeezed_position_marginal_variance() {
        let c = conv(256);
        let sv = squeezed_vacuum(0.9, &c).unwrap();
        let axis = C64::new(0.0, 2.0 * PI / (2.0 * PI).sqrt());
        let scan = char_scan(&sv, axis, &linspace(-5.0, 5.0, 201), &c).unwrap();
        let m = marginal_from_scan(&scan, Quadrature::Q, DEFAULT_PADDING).unwrap();
        let (mean, var) = m.moments();
        assert!(mean.abs() < 1e-6);
        let target = (-1.8f64).exp() / 4.0;
        assert!((var / target - 1.0).abs() < 0.01, "{var} vs {target}");
        assert!(m.flags.is_empty(), "{:?}", m.flags);
        assert!(m.parseval_defect < 1e-8);
    }

    #[test]
    fn codeword_momentum_marginal_matches_direct_oracle() {
        let c = conv(256);
        let p = GridParams::standard();
        let zero = codeword(&p, Codeword::Zero, &c).unwrap();
        let scan = char_scan(&zero, C64::new(p.l, 0.0), &linspace(-4.0, 4.0, 641), &c).unwrap();
        let m = marginal_from_scan(&scan, Quadrature::P, DEFAULT_PADDING).unwrap();
        let peak = m.density.iter().cloned().fold(0.0, f64::max);
        for x in linspace(-2.0, 2.0, 41) {
            let oracle = direct_marginal(&zero, x, Quadrature::P);
            let got = m.density_at(x);
            assert!(
                (got - oracle).abs() <= 0.02 * peak,
                "p={x}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn marginal_rejects_bad_grids() {
        let scan = CharScan {
            axis: C64::new(1.0, 0.0),
            t_values: vec![0.0, 0.1, 0.3],
            values: vec![C64::new(1.0, 0.0); 3],
            shots: None,
        };
        assert!(matches!(
            marginal_from_scan(&scan, Quadrature::P, 8),
            Err(Error::InvalidScan(_))
        ));
        let wrong_axis = CharScan {
            t_values: vec![0.0, 0.1, 0.2],
            ..scan.clone()
        };
        assert!(matches!(
            marginal_from_scan(&wrong_axis, Quadrature::Q, 8),
            Err(Error::InvalidScan(_))
        ));
    }

    #[test]
    fn all_ones_scan_is_flagged() {
        let t = linspace(-1.0, 1.0, 41);
        let scan = CharScan {
            axis: C64::new(1.0, 0.0),
            values: vec![C64::new(1.0, 0.0); t.len()],
            t_values: t,
            shots: None,
        };
        let m = marginal_from_scan(&scan, Quadrature::P, 8).unwrap();
        assert!(!m.flags.is_empty());
    }

    #[test]
    fn wigner_at_origin() {
        let c = conv(32);
        let w = wigner_pure(&FockVector::vacuum(32), &[0.0], &[0.0], &c).unwrap();
        assert!((w[(0, 0)] - 2.0 / PI).abs() < 1e-8);
        let w1 = wigner_pure(&FockVector::number_state(1, 32), &[0.0], &[0.0], &c).unwrap();
        assert!((w1[(0, 0)] + 2.0 / PI).abs() < 1e-8);
    }

    #[test]
    fn wigner_integrates_to_one_and_marginalizes() {
        let c = conv(128);
        let sv = squeezed_vacuum(0.4, &c).unwrap();
        let q = linspace(-1.5, 1.5, 61);
        let p = linspace(-2.5, 2.5, 81);
        let w = wigner_pure(&sv, &q, &p, &c).unwrap();
        let (dq, dp) = (q[1] - q[0], p[1] - p[0]);
        let total: f64 = w.iter().sum::<f64>() * dq * dp;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        for (i, &x) in q.iter().enumerate().step_by(10) {
            let pq: f64 = w.row(i).iter().sum::<f64>() * dp;
            let oracle = direct_marginal(&sv, x, Quadrature::Q);
            assert!(
                (pq - oracle).abs() < 0.01 * 1.0f64.max(oracle),
                "{x}: {pq} vs {oracle}"
            );
        }
    }

    #[test]
    fn bootstrap_matches_binomial_formula() {
        let se = bootstrap_errors(
            &[ShotRecord {
                successes: 200,
                shots: 400,
            }],
            1000,
            3,
        )
        .unwrap();
        assert!((se[0] / 0.025 - 1.0).abs() < 0.2, "{}", se[0]);
        let flat = bootstrap_errors(
            &[
                ShotRecord {
                    successes: 50,
                    shots: 50,
                },
                ShotRecord {
                    successes: 0,
                    shots: 50,
                },
            ],
            200,
            1,
        )
        .unwrap();
        assert_eq!(flat, vec![0.0, 0.0]);
        assert!(bootstrap_errors(
            &[ShotRecord {
                successes: 1,
                shots: 2
            }],
            99,
            0
        )
        .is_err());
        assert!(bootstrap_errors(
            &[ShotRecord {
                successes: 3,
                shots: 2
            }],
            100,
            0
        )
        .is_err());
    }

    #[test]
    fn bootstrap_scaling_with_shots() {
        let a = bootstrap_errors(
            &[ShotRecord {
                successes: 150,
                shots: 500,
            }],
            2000,
            11,
        )
        .unwrap()[0];
        let b = bootstrap_errors(
            &[ShotRecord {
                successes: 600,
                shots: 2000,
            }],
            2000,
            11,
        )
        .unwrap()[0];
        // Four times the shots halves the error.
        assert!((a / b / 2.0 - 1.0).abs() < 0.25, "{a} {b}");
    }
}
