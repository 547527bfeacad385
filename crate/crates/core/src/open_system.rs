//! Lindblad evolution of the pulse sequence with motional dephasing.
//!
//! The dissipator uses `L = sqrt(Gamma)(a a† + a† a) = sqrt(Gamma)(2n + 1)`,
//! which is diagonal in the Fock basis, so its flow is the exact elementwise
//! factor `exp(-2 Gamma t (n - m)^2)`. Drives are integrated with a Lawson
//! (integrating-factor) RK4 step around that factor, which keeps long waits
//! and strong dephasing stable at any step size.
//!
//! The hybrid state is stored as four `N x N` blocks `rho_ij = <i|rho|j>` of
//! the ancilla levels, each column-major.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{Part, SequenceRecipe, Step};
use crate::error::{Error, Result};
use crate::grid::{default_frame, GridParams, LogicalFrame};
use crate::oscillator::{squeezed_vacuum, Conventions, DensityMatrix};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Dephasing rate in s^-1.
    pub gamma: f64,
}

impl NoiseParams {
    pub fn new(gamma: f64) -> Result<Self> {
        let p = Self { gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn noiseless() -> Self {
        Self { gamma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "dephasing rate must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// One piece of a pulse sequence. Durations are in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    /// `D(alpha/2 X)` spread evenly over `duration`.
    Sdf {
        alpha: C64,
        duration: f64,
    },
    Carrier {
        theta: f64,
        phi: f64,
        duration: f64,
    },
    /// Unconditional `D(alpha)`.
    Displacement {
        alpha: C64,
        duration: f64,
    },
    Wait {
        duration: f64,
    },
    /// Post-select the dark outcome and re-prepare the ancilla in `|1>`.
    Measure,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Sdf { duration, .. }
            | Segment::Carrier { duration, .. }
            | Segment::Displacement { duration, .. }
            | Segment::Wait { duration } => *duration,
            Segment::Measure => 0.0,
        }
    }
}

pub const TRAP_FREQUENCY_HZ: f64 = 1.85e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub segments: Vec<Segment>,
    /// Recorded only; the evolution is in the resonant rotating frame.
    #[serde(default = "default_trap_frequency")]
    pub trap_frequency_hz: f64,
}

fn default_trap_frequency() -> f64 {
    TRAP_FREQUENCY_HZ
}

impl PulseSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let s = Self {
            segments,
            trap_frequency_hz: TRAP_FREQUENCY_HZ,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for seg in &self.segments {
            let d = seg.duration();
            if !d.is_finite() || d < 0.0 {
                return Err(Error::NegativeDuration(d));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }
}

/// Default pulse durations. The force duration scales linearly with `|alpha|`
/// from the reference point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timings {
    pub sdf_reference_duration: f64,
    pub sdf_reference_alpha: f64,
    pub carrier: f64,
    pub displacement: f64,
    pub wait: f64,
}

impl Default for Timings {
    fn default() -> Self {
        Self {
            sdf_reference_duration: 38e-6,
            sdf_reference_alpha: (2.0 * PI).sqrt(),
            carrier: 5e-6,
            displacement: 10e-6,
            wait: 0.0,
        }
    }
}

impl Timings {
    pub fn sdf_duration(&self, alpha: C64) -> f64 {
        self.sdf_reference_duration * alpha.norm() / self.sdf_reference_alpha
    }

    pub fn validate(&self) -> Result<()> {
        for d in [
            self.sdf_reference_duration,
            self.carrier,
            self.displacement,
            self.wait,
        ] {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::NegativeDuration(d));
            }
        }
        if !(self.sdf_reference_alpha.is_finite() && self.sdf_reference_alpha > 0.0) {
            return Err(Error::InvalidParams(
                "sdf reference alpha must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Pulse schedule for everything after the squeezed-state preparation.
pub fn compile_recipe(
    recipe: &SequenceRecipe,
    params: &GridParams,
    timings: &Timings,
) -> Result<PulseSchedule> {
    compile_recipe_in_frame(recipe, &default_frame(params), timings)
}

/// As [`compile_recipe`], with Pauli and teleport amplitudes taken from `frame`.
pub fn compile_recipe_in_frame(
    recipe: &SequenceRecipe,
    frame: &LogicalFrame,
    timings: &Timings,
) -> Result<PulseSchedule> {
    recipe.validate()?;
    timings.validate()?;
    let mut segments = Vec::new();
    let push = |segments: &mut Vec<Segment>, seg: Segment| {
        if timings.wait > 0.0 && !segments.is_empty() {
            segments.push(Segment::Wait {
                duration: timings.wait,
            });
        }
        segments.push(seg);
    };
    for step in &recipe.steps[1..] {
        match step {
            Step::SqueezePrep => unreachable!("validated"),
            Step::Modular { alpha } => {
                push(
                    &mut segments,
                    Segment::Sdf {
                        alpha: *alpha,
                        duration: timings.sdf_duration(*alpha),
                    },
                );
                segments.push(Segment::Measure);
            }
            Step::Pauli { axis } => push(
                &mut segments,
                Segment::Displacement {
                    alpha: frame.pauli_amplitude(*axis),
                    duration: timings.displacement,
                },
            ),
            Step::Teleport { axis, theta, phi } => {
                let l = frame.amplitude(*axis);
                push(
                    &mut segments,
                    Segment::Carrier {
                        theta: *theta,
                        phi: *phi,
                        duration: timings.carrier,
                    },
                );
                push(
                    &mut segments,
                    Segment::Sdf {
                        alpha: l * 0.5,
                        duration: timings.sdf_duration(l * 0.5),
                    },
                );
                push(
                    &mut segments,
                    Segment::Displacement {
                        alpha: -l * 0.25,
                        duration: timings.displacement,
                    },
                );
                segments.push(Segment::Measure);
            }
        }
    }
    PulseSchedule::new(segments)
}

/// Closed-form dephasing: `rho_nm -> rho_nm exp(-2 Gamma t (n - m)^2)`.
pub fn dephasing_evolve(
    rho: &DensityMatrix,
    duration: f64,
    noise: &NoiseParams,
) -> Result<DensityMatrix> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(Error::NegativeDuration(duration));
    }
    noise.validate()?;
    let m = rho.matrix();
    let k = -2.0 * noise.gamma * duration;
    let out = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |n, j| {
        let d = n as f64 - j as f64;
        m[(n, j)] * (k * d * d).exp()
    });
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorOptions {
    /// Lawson-RK4 steps per driven segment.
    pub steps_per_segment: usize,
    /// Rerun with twice the steps and fail if results move by more than this.
    pub convergence_tolerance: Option<f64>,
    /// Compute the smallest eigenvalue of the hybrid state at each boundary.
    pub track_positivity: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            steps_per_segment: 512,
            convergence_tolerance: Some(1e-6),
            track_positivity: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Boundary {
    /// Segment index just completed.
    pub segment: usize,
    /// Unnormalized trace, equal to the cumulative dark probability.
    pub trace: f64,
    pub min_eigenvalue: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutput {
    /// Normalized oscillator state on the dark branch (ancilla traced out).
    pub state: DensityMatrix,
    pub success_probability: f64,
    pub branch_probabilities: Vec<f64>,
    pub boundaries: Vec<Boundary>,
}

/// Hybrid density matrix as four column-major blocks.
#[derive(Clone, Debug)]
struct HybridDensity {
    dim: usize,
    data: Vec<C64>,
}

impl HybridDensity {
    fn ancilla_one(rho: &DensityMatrix) -> Self {
        let n = rho.dim();
        let mut data = vec![C64::new(0.0, 0.0); 4 * n * n];
        let m = rho.matrix();
        let b = 3 * n * n;
        for col in 0..n {
            for row in 0..n {
                data[b + col * n + row] = m[(row, col)];
            }
        }
        Self { dim: n, data }
    }

    fn block(&self, b: usize) -> &[C64] {
        let s = self.dim * self.dim;
        &self.data[b * s..(b + 1) * s]
    }

    fn block_trace(&self, b: usize) -> f64 {
        let blk = self.block(b);
        (0..self.dim).map(|n| blk[n * self.dim + n].re).sum()
    }

    fn trace(&self) -> f64 {
        self.block_trace(0) + self.block_trace(3)
    }

    fn block_matrix(&self, b: usize) -> nalgebra::DMatrix<C64> {
        nalgebra::DMatrix::from_column_slice(self.dim, self.dim, self.block(b))
    }

    /// Keep the dark block and re-prepare the ancilla in `|1>`.
    fn post_select(&mut self) {
        let s = self.dim * self.dim;
        for v in &mut self.data[..3 * s] {
            *v = C64::new(0.0, 0.0);
        }
    }

    fn full_matrix(&self) -> nalgebra::DMatrix<C64> {
        let n = self.dim;
        nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let b = 2 * (r / n) + c / n;
            self.block(b)[(c % n) * n + r % n]
        })
    }
}

/// Anti-Hermitian drive generator `A`, constant over a segment.
#[derive(Clone, Copy, Debug)]
enum Drive {
    /// `(beta a† - beta* a) ⊗ X`.
    Sdf(C64),
    /// `(beta a† - beta* a) ⊗ 1`.
    Displace(C64),
    /// `K ⊗ 1` with `K` a 2x2 anti-Hermitian matrix.
    Carrier([[C64; 2]; 2]),
}

struct Integrator {
    dim: usize,
    sqrt: Vec<f64>,
}

impl Integrator {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            sqrt: (0..=dim).map(|n| (n as f64).sqrt()).collect(),
        }
    }

    fn dephasing_factors(&self, gamma: f64, h: f64) -> Vec<f64> {
        let n = self.dim;
        let mut f = vec![0.0; n * n];
        for col in 0..n {
            for row in 0..n {
                let d = row as f64 - col as f64;
                f[col * n + row] = (-2.0 * gamma * h * d * d).exp();
            }
        }
        f
    }

    fn scale(&self, factors: &[f64], u: &mut [C64]) {
        let s = self.dim * self.dim;
        for blk in u.chunks_mut(s) {
            for (x, &f) in blk.iter_mut().zip(factors) {
                *x *= f;
            }
        }
    }

    /// `dst = (beta a† - beta* a) src` for one column-major block.
    fn apply_ladder(&self, beta: C64, src: &[C64], dst: &mut [C64]) {
        let n = self.dim;
        let bc = beta.conj();
        for col in 0..n {
            let s = &src[col * n..(col + 1) * n];
            let d = &mut dst[col * n..(col + 1) * n];
            for row in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                if row > 0 {
                    acc += beta * self.sqrt[row] * s[row - 1];
                }
                if row + 1 < n {
                    acc -= bc * self.sqrt[row + 1] * s[row + 1];
                }
                d[row] = acc;
            }
        }
    }

    /// `out = A u + (A u)†` with the adjoint taken over the full hybrid matrix.
    fn rhs(&self, drive: &Drive, u: &[C64], y: &mut [C64], out: &mut [C64]) {
        let n = self.dim;
        let s = n * n;
        match drive {
            Drive::Sdf(beta) => {
                for i in 0..2 {
                    for j in 0..2 {
                        let src = 2 * (1 - i) + j;
                        let dst = 2 * i + j;
                        let (src_blk, dst_blk) =
                            (&u[src * s..(src + 1) * s], &mut y[dst * s..(dst + 1) * s]);
                        self.apply_ladder(*beta, src_blk, dst_blk);
                    }
                }
            }
            Drive::Displace(beta) => {
                for b in 0..4 {
                    self.apply_ladder(*beta, &u[b * s..(b + 1) * s], &mut y[b * s..(b + 1) * s]);
                }
            }
            Drive::Carrier(k) => {
                for i in 0..2 {
                    for j in 0..2 {
                        let dst = 2 * i + j;
                        let a = j; // block (0, j)
                        let b = 2 + j; // block (1, j)
                        for e in 0..s {
                            y[dst * s + e] = k[i][0] * u[a * s + e] + k[i][1] * u[b * s + e];
                        }
                    }
                }
            }
        }
        // (Y†)_{ij}[r, c] = conj(Y_{ji}[c, r])
        for i in 0..2 {
            for j in 0..2 {
                let b = 2 * i + j;
                let t = 2 * j + i;
                for col in 0..n {
                    for row in 0..n {
                        out[b * s + col * n + row] =
                            y[b * s + col * n + row] + y[t * s + row * n + col].conj();
                    }
                }
            }
        }
    }

    fn evolve(
        &self,
        state: &mut HybridDensity,
        drive: Option<Drive>,
        duration: f64,
        gamma: f64,
        steps: usize,
    ) {
        let Some(drive) = drive else {
            let f = self.dephasing_factors(gamma, duration);
            self.scale(&f, &mut state.data);
            return;
        };
        if duration == 0.0 {
            // Instantaneous pulse: integrate the same area over unit time
            // without dissipation.
            self.evolve(state, Some(drive), 1.0, 0.0, steps);
            return;
        }
        let h = duration / steps as f64;
        let half = self.dephasing_factors(gamma, h / 2.0);
        let len = state.data.len();
        let zero = C64::new(0.0, 0.0);
        let mut y = vec![zero; len];
        let mut k1 = vec![zero; len];
        let mut k2 = vec![zero; len];
        let mut k3 = vec![zero; len];
        let mut k4 = vec![zero; len];
        let mut tmp = vec![zero; len];
        let mut uh = vec![zero; len];
        let u = &mut state.data;
        for _ in 0..steps {
            self.rhs(&drive, u, &mut y, &mut k1);
            // E_{h/2} u
            uh.copy_from_slice(u);
            self.scale(&half, &mut uh);
            // k2 = N(E_{h/2} u + h/2 E_{h/2} k1); k1 is kept as E_{h/2} k1.
            self.scale(&half, &mut k1);
            for e in 0..len {
                tmp[e] = uh[e] + k1[e] * (h / 2.0);
            }
            self.rhs(&drive, &tmp, &mut y, &mut k2);
            // k3 = N(E_{h/2} u + h/2 k2)
            for e in 0..len {
                tmp[e] = uh[e] + k2[e] * (h / 2.0);
            }
            self.rhs(&drive, &tmp, &mut y, &mut k3);
            // k4 = N(E_h u + h E_{h/2} k3)
            for e in 0..len {
                tmp[e] = uh[e] + k3[e] * h;
            }
            self.scale(&half, &mut tmp);
            self.rhs(&drive, &tmp, &mut y, &mut k4);
            // u' = E_h u + h/6 (E_h k1 + 2 E_{h/2}(k2 + k3) + k4)
            for e in 0..len {
                tmp[e] = uh[e] + k1[e] * (h / 6.0) + (k2[e] + k3[e]) * (h / 3.0);
            }
            self.scale(&half, &mut tmp);
            for e in 0..len {
                u[e] = tmp[e] + k4[e] * (h / 6.0);
            }
        }
    }
}

fn drive_of(segment: &Segment) -> Option<Drive> {
    let per_time = |d: f64| if d > 0.0 { 1.0 / d } else { 1.0 };
    match segment {
        Segment::Sdf { alpha, duration } => Some(Drive::Sdf(alpha * 0.5 * per_time(*duration))),
        Segment::Displacement { alpha, duration } => {
            Some(Drive::Displace(alpha * per_time(*duration)))
        }
        Segment::Carrier {
            theta,
            phi,
            duration,
        } => {
            // exp(duration K) = R(theta, phi) with K = log(R) / duration.
            let i = C64::new(0.0, 1.0);
            let w = theta / 2.0 * per_time(*duration);
            let (sp, cp) = phi.sin_cos();
            let x = [
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            ];
            let y = [[C64::new(0.0, 0.0), -i], [i, C64::new(0.0, 0.0)]];
            let mut k = [[C64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    k[r][c] = i * w * (x[r][c] * sp + y[r][c] * cp);
                }
            }
            Some(Drive::Carrier(k))
        }
        Segment::Wait { .. } | Segment::Measure => None,
    }
}

fn min_eigenvalue(state: &HybridDensity) -> f64 {
    DensityMatrix::from_matrix_unchecked(state.full_matrix()).min_eigenvalue()
}

fn run_schedule(
    schedule: &PulseSchedule,
    initial: &DensityMatrix,
    noise: &NoiseParams,
    steps: usize,
    track_positivity: bool,
) -> Result<(HybridDensity, Vec<f64>, Vec<Boundary>)> {
    let integ = Integrator::new(initial.dim());
    let mut state = HybridDensity::ancilla_one(initial);
    let mut branches = Vec::new();
    let mut boundaries = Vec::new();
    for (idx, seg) in schedule.segments.iter().enumerate() {
        match seg {
            Segment::Measure => {
                let total = state.trace();
                let dark = state.block_trace(3);
                if !(dark > 0.0) || !(total > 0.0) {
                    return Err(Error::ZeroProbability(format!(
                        "dark branch empty at segment {idx}"
                    )));
                }
                branches.push(dark / total);
                state.post_select();
            }
            other => integ.evolve(
                &mut state,
                drive_of(other),
                other.duration(),
                noise.gamma,
                steps,
            ),
        }
        boundaries.push(Boundary {
            segment: idx,
            trace: state.trace(),
            min_eigenvalue: track_positivity.then(|| min_eigenvalue(&state)),
        });
    }
    Ok((state, branches, boundaries))
}

/// Oscillator state of the dark branch, ancilla traced out, normalized.
fn dark_oscillator(state: &HybridDensity) -> Result<(DensityMatrix, f64)> {
    let m = state.block_matrix(0) + state.block_matrix(3);
    DensityMatrix::from_matrix_unchecked(m)
        .normalized()
        .ok_or_else(|| Error::ZeroProbability("final state has zero trace".into()))
}

/// Runs `schedule` from `|1><1| ⊗ initial`, post-selecting dark at every
/// measure segment.
pub fn simulate_sequence(
    schedule: &PulseSchedule,
    initial: &DensityMatrix,
    noise: &NoiseParams,
    conv: &Conventions,
    opts: &IntegratorOptions,
) -> Result<SimulationOutput> {
    schedule.validate()?;
    noise.validate()?;
    conv.check_dim(initial.dim())?;
    check_schedule_guard(schedule, conv)?;
    if opts.steps_per_segment == 0 {
        return Err(Error::InvalidParams(
            "steps_per_segment must be positive".into(),
        ));
    }
    let (state, branches, boundaries) = run_schedule(
        schedule,
        initial,
        noise,
        opts.steps_per_segment,
        opts.track_positivity,
    )?;
    let (rho, total) = dark_oscillator(&state)?;
    if let Some(tol) = opts.convergence_tolerance {
        let (fine, _, _) =
            run_schedule(schedule, initial, noise, 2 * opts.steps_per_segment, false)?;
        let (rho_fine, total_fine) = dark_oscillator(&fine)?;
        let shift = (total - total_fine).abs();
        if shift > tol {
            return Err(Error::NonConvergence {
                observable: "success_probability",
                shift,
                tolerance: tol,
            });
        }
        let shift = (rho.matrix() - rho_fine.matrix()).norm();
        if shift > tol {
            return Err(Error::NonConvergence {
                observable: "state",
                shift,
                tolerance: tol,
            });
        }
    }
    Ok(SimulationOutput {
        state: rho,
        success_probability: total,
        branch_probabilities: branches,
        boundaries,
    })
}

fn check_schedule_guard(schedule: &PulseSchedule, conv: &Conventions) -> Result<()> {
    for seg in &schedule.segments {
        match seg {
            Segment::Sdf { alpha, .. } => conv.check_displacement(alpha * 0.5)?,
            Segment::Displacement { alpha, .. } => conv.check_displacement(*alpha)?,
            _ => {}
        }
    }
    Ok(())
}

/// `S(r)|0><0|S(r)†`, the starting point of every recipe.
pub fn squeezed_density(params: &GridParams, conv: &Conventions) -> Result<DensityMatrix> {
    Ok(squeezed_vacuum(params.r, conv)?.to_density())
}

/// Compiles `recipe` with `timings` and simulates it from the squeezed vacuum.
pub fn simulate_recipe(
    recipe: &SequenceRecipe,
    params: &GridParams,
    noise: &NoiseParams,
    timings: &Timings,
    conv: &Conventions,
    opts: &IntegratorOptions,
) -> Result<SimulationOutput> {
    let schedule = compile_recipe(recipe, params, timings)?;
    simulate_sequence(
        &schedule,
        &squeezed_density(params, conv)?,
        noise,
        conv,
        opts,
    )
}

/// `P(dark) - P(bright)` of a modular readout whose force segment dephases
/// while it runs. For the imaginary part a carrier `R(pi/2, -pi/2)` follows
/// the force.
pub fn simulate_readout(
    rho: &DensityMatrix,
    alpha: C64,
    part: Part,
    noise: &NoiseParams,
    timings: &Timings,
    conv: &Conventions,
    steps: usize,
) -> Result<f64> {
    noise.validate()?;
    timings.validate()?;
    conv.check_dim(rho.dim())?;
    conv.check_displacement(alpha * 0.5)?;
    let integ = Integrator::new(rho.dim());
    let mut state = HybridDensity::ancilla_one(rho);
    let sdf = Segment::Sdf {
        alpha,
        duration: timings.sdf_duration(alpha),
    };
    integ.evolve(
        &mut state,
        drive_of(&sdf),
        sdf.duration(),
        noise.gamma,
        steps,
    );
    if part == Part::Imaginary {
        let carrier = Segment::Carrier {
            theta: std::f64::consts::FRAC_PI_2,
            phi: -std::f64::consts::FRAC_PI_2,
            duration: timings.carrier,
        };
        integ.evolve(
            &mut state,
            drive_of(&carrier),
            carrier.duration(),
            noise.gamma,
            steps,
        );
    }
    let total = state.trace();
    Ok((state.block_trace(3) - state.block_trace(0)) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{carrier_matrix, prepare_state, StateLabel};
    use crate::oscillator::FockVector;
    use nalgebra::DMatrix;

    fn fock_superposition(dim: usize) -> DensityMatrix {
        let mut v = vec![C64::new(0.0, 0.0); dim];
        for (n, a) in [(0, 0.5), (1, 0.5), (2, 0.4), (4, 0.5)] {
            if n < dim {
                v[n] = C64::new(a, 0.1 * n as f64);
            }
        }
        FockVector::from_vec(v).normalized().unwrap().0.to_density()
    }

    #[test]
    fn diagonal_states_do_not_dephase() {
        let dim = 8;
        let rho = DensityMatrix::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_fn(
            dim,
            |n, _| C64::new(1.0 / dim as f64 + 0.0 * n as f64, 0.0),
        )))
        .unwrap();
        let out = dephasing_evolve(&rho, 0.5, &NoiseParams::new(7.0).unwrap()).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn coherence_factor() {
        let rho = fock_superposition(8);
        let out = dephasing_evolve(&rho, 1e-3, &NoiseParams::new(7.0).unwrap()).unwrap();
        let ratio = out.matrix()[(1, 2)] / rho.matrix()[(1, 2)];
        assert!((ratio.re - 0.98610).abs() < 1e-5);
        assert!((ratio.re - (-0.014f64).exp()).abs() < 1e-12);
        let r01 = (out.matrix()[(0, 1)] / rho.matrix()[(0, 1)]).re.ln();
        let r04 = (out.matrix()[(0, 4)] / rho.matrix()[(0, 4)]).re.ln();
        assert!((r04 / r01 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn negative_duration_rejected() {
        let rho = fock_superposition(4);
        assert_eq!(
            dephasing_evolve(&rho, -1.0, &NoiseParams::noiseless()).unwrap_err(),
            Error::NegativeDuration(-1.0)
        );
        assert!(PulseSchedule::new(vec![Segment::Wait { duration: -1e-6 }]).is_err());
        assert!(NoiseParams::new(-1.0).is_err());
    }

    #[test]
    fn wait_schedule_matches_closed_form() {
        let c = Conventions::new(8).unwrap();
        let rho = fock_superposition(8);
        let noise = NoiseParams::new(7.0).unwrap();
        let sched = PulseSchedule::new(vec![
            Segment::Wait { duration: 4e-3 },
            Segment::Wait { duration: 6e-3 },
        ])
        .unwrap();
        let out =
            simulate_sequence(&sched, &rho, &noise, &c, &IntegratorOptions::default()).unwrap();
        let exact = dephasing_evolve(&rho, 1e-2, &noise).unwrap();
        assert!((out.state.matrix() - exact.matrix()).norm() < 1e-8);
        assert!((out.success_probability - 1.0).abs() < 1e-12);
    }

    /// Full hybrid Liouvillian, exponentiated densely, as an oracle for a
    /// single driven segment.
    fn liouvillian_oracle(rho: &DensityMatrix, seg: &Segment, gamma: f64) -> DMatrix<C64> {
        let n = rho.dim();
        let d = 2 * n;
        let mut a = DMatrix::<C64>::zeros(n, n);
        for k in 1..n {
            a[(k - 1, k)] = C64::from((k as f64).sqrt());
        }
        let ad = a.adjoint();
        let kron = |q: &DMatrix<C64>, o: &DMatrix<C64>| q.kronecker(o);
        let qx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(C64::from));
        let q1 = DMatrix::<C64>::identity(2, 2);
        let tau = seg.duration();
        let gen = match seg {
            Segment::Sdf { alpha, .. } => {
                let g = (&ad * *alpha - &a * alpha.conj()) * C64::from(0.5 / tau);
                kron(&qx, &g)
            }
            Segment::Displacement { alpha, .. } => {
                let g = (&ad * *alpha - &a * alpha.conj()) * C64::from(1.0 / tau);
                kron(&q1, &g)
            }
            _ => unreachable!(),
        };
        let l = kron(
            &q1,
            &DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |k, _| {
                C64::from(2.0 * k as f64 + 1.0)
            })),
        );
        // Row-major vectorization: vec(A X B) = (A ⊗ B^T) vec(X).
        let eye = DMatrix::<C64>::identity(d, d);
        let ldl = kron(&l, &l.transpose());
        let ltl = &l.adjoint() * &l;
        let sup = kron(&gen, &eye) - kron(&eye, &gen.transpose())
            + (ldl
                - kron(&ltl, &eye) * C64::from(0.5)
                - kron(&eye, &ltl.transpose()) * C64::from(0.5))
                * C64::from(gamma);
        let prop = (sup * C64::from(tau)).exp();
        let mut init = DMatrix::<C64>::zeros(d, d);
        init.view_mut((n, n), (n, n)).copy_from(rho.matrix());
        let v = DMatrix::from_row_slice(d * d, 1, init.transpose().as_slice());
        let out = prop * v;
        DMatrix::from_row_slice(d, d, out.as_slice())
    }

    #[test]
    fn driven_segments_match_superoperator_exponential() {
        let n = 6;
        let rho = fock_superposition(n);
        let integ = Integrator::new(n);
        for seg in [
            Segment::Sdf {
                alpha: C64::new(0.6, -0.3),
                duration: 40e-6,
            },
            Segment::Displacement {
                alpha: C64::new(-0.2, 0.5),
                duration: 10e-6,
            },
        ] {
            // Large rate so the dissipator matters over microseconds.
            let gamma = 3000.0;
            let mut st = HybridDensity::ancilla_one(&rho);
            integ.evolve(&mut st, drive_of(&seg), seg.duration(), gamma, 512);
            let oracle = liouvillian_oracle(&rho, &seg, gamma);
            let got = st.full_matrix();
            assert!((got - oracle).norm() < 1e-9, "{seg:?}");
        }
    }

    #[test]
    fn carrier_segment_is_the_rotation() {
        let n = 4;
        let rho = fock_superposition(n);
        let integ = Integrator::new(n);
        let seg = Segment::Carrier {
            theta: 1.1,
            phi: 0.4,
            duration: 5e-6,
        };
        let mut st = HybridDensity::ancilla_one(&rho);
        integ.evolve(&mut st, drive_of(&seg), seg.duration(), 0.0, 256);
        let m = carrier_matrix(1.1, 0.4);
        // R|1> = m[0][1]|0> + m[1][1]|1>
        let p0 = m[0][1].norm_sqr();
        assert!(
            (st.block_trace(0) - p0).abs() < 1e-10,
            "{} vs {p0}",
            st.block_trace(0)
        );
        let c01 = st.block_matrix(1);
        let expect = rho.matrix() * (m[0][1] * m[1][1].conj());
        assert!((c01 - expect).norm() < 1e-10);
    }

    #[test]
    fn noiseless_sequence_matches_pure_pipeline() {
        let c = Conventions::new(96).unwrap();
        let p = GridParams::standard();
        for label in [StateLabel::Zero, StateLabel::PhiPlus] {
            let recipe = label.recipe(&p);
            let pure = prepare_state(&recipe, &p, &c).unwrap();
            let opts = IntegratorOptions {
                track_positivity: true,
                ..Default::default()
            };
            let out = simulate_recipe(
                &recipe,
                &p,
                &NoiseParams::noiseless(),
                &Timings::default(),
                &c,
                &opts,
            )
            .unwrap();
            let td = out.state.trace_distance(&pure.state.to_density());
            assert!(td < 1e-8, "{label}: {td}");
            assert!((out.success_probability - pure.success_probability).abs() < 1e-9);
            let mut cumulative = 1.0;
            let mut bi = 0;
            for (seg, b) in compile_recipe(&recipe, &p, &Timings::default())
                .unwrap()
                .segments
                .iter()
                .zip(&out.boundaries)
            {
                if *seg == Segment::Measure {
                    cumulative *= out.branch_probabilities[bi];
                    bi += 1;
                    assert!((b.trace - cumulative).abs() < 1e-7);
                }
                assert!(b.min_eigenvalue.unwrap() > -1e-7);
            }
        }
    }

    #[test]
    fn dephasing_lowers_stabilizers() {
        let c = Conventions::new(96).unwrap();
        let p = GridParams::standard();
        let f = default_frame(&p);
        let recipe = StateLabel::Zero.recipe(&p);
        let t = Timings::default();
        let opts = IntegratorOptions {
            convergence_tolerance: None,
            ..Default::default()
        };
        let clean = simulate_recipe(&recipe, &p, &NoiseParams::noiseless(), &t, &c, &opts).unwrap();
        let noisy =
            simulate_recipe(&recipe, &p, &NoiseParams::new(7.0).unwrap(), &t, &c, &opts).unwrap();
        for axis in [crate::Axis::X, crate::Axis::Z] {
            let a = f.stabilizer_amplitude(axis);
            let s0 = crate::displacement_expectation(&clean.state, a, &c)
                .unwrap()
                .re;
            let s1 = crate::displacement_expectation(&noisy.state, a, &c)
                .unwrap()
                .re;
            assert!(s1 < s0, "{axis:?}: {s1} !< {s0}");
        }
    }

    #[test]
    fn readout_without_noise_is_the_characteristic_function() {
        let c = Conventions::new(64).unwrap();
        let rho = fock_superposition(64);
        let alpha = C64::new(0.7, 1.3);
        let chi = crate::displacement_expectation(&rho, alpha, &c).unwrap();
        let t = Timings::default();
        let re = simulate_readout(
            &rho,
            alpha,
            Part::Real,
            &NoiseParams::noiseless(),
            &t,
            &c,
            512,
        )
        .unwrap();
        let im = simulate_readout(
            &rho,
            alpha,
            Part::Imaginary,
            &NoiseParams::noiseless(),
            &t,
            &c,
            512,
        )
        .unwrap();
        assert!((re - chi.re).abs() < 1e-9);
        assert!((im - chi.im).abs() < 1e-9);
    }

    #[test]
    fn purity_decreases_while_waiting() {
        let rho = fock_superposition(8);
        let noise = NoiseParams::new(7.0).unwrap();
        let mut last = rho.purity();
        for k in 1..20 {
            let out = dephasing_evolve(&rho, k as f64 * 1e-3, &noise).unwrap();
            assert!(out.purity() <= last + 1e-15);
            last = out.purity();
        }
    }

    #[test]
    fn compiled_teleport_segments() {
        let p = GridParams::standard();
        let sched = compile_recipe(&StateLabel::Plus.recipe(&p), &p, &Timings::default()).unwrap();
        let kinds: Vec<&str> = sched
            .segments
            .iter()
            .map(|s| match s {
                Segment::Sdf { .. } => "sdf",
                Segment::Carrier { .. } => "carrier",
                Segment::Displacement { .. } => "disp",
                Segment::Wait { .. } => "wait",
                Segment::Measure => "measure",
            })
            .collect();
        assert_eq!(
            kinds,
            ["sdf", "measure", "sdf", "measure", "carrier", "sdf", "disp", "measure"]
        );
        assert!((sched.segments[0].duration() - 38e-6).abs() < 1e-18);
        assert!((sched.segments[5].duration() - 19e-6).abs() < 1e-12);
        let text = serde_json::to_string(&sched).unwrap();
        let back: PulseSchedule = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sched);
    }
}
