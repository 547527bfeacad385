//! Ancilla qubit ⊗ oscillator circuits: state-dependent force, carrier
//! rotations, post-selected fluorescence readout, modular measurements and
//! teleported gates.
//!
//! Bookkeeping: the ancilla starts in `|1>`, the force gives `D(+alpha/2)` to
//! `|+>` and `D(-alpha/2)` to `|->`, and the dark outcome keeps the `|1>`
//! component. With `|1> = (|+> - |->)/sqrt(2)` the dark branch applies
//! `E+ = (D(alpha/2) + D(-alpha/2))/2` and the bright branch `E-`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{default_frame, Axis, GridParams, LogicalFrame};
use crate::oscillator::{squeezed_vacuum, Conventions, FockVector, OscState};
use crate::C64;

/// Branches with squared norm below this are treated as empty.
const EMPTY_BRANCH: f64 = 1e-300;

/// Joint pure state, qubit-major: index `q * N + n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    amps: DVector<C64>,
    fock_dim: usize,
    probability_weight: f64,
}

impl HybridState {
    /// `(a0 |0> + a1 |1>) ⊗ |osc>` with unit probability weight.
    pub fn product(qubit: [C64; 2], osc: &FockVector) -> Self {
        let n = osc.dim();
        let mut amps = DVector::zeros(2 * n);
        for (level, &a) in qubit.iter().enumerate() {
            amps.rows_mut(level * n, n)
                .copy_from(&(osc.amplitudes() * a));
        }
        Self {
            amps,
            fock_dim: n,
            probability_weight: 1.0,
        }
    }

    /// Ancilla prepared in `|1>`.
    pub fn ancilla_one(osc: &FockVector) -> Self {
        Self::product([C64::new(0.0, 0.0), C64::new(1.0, 0.0)], osc)
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.probability_weight = weight;
        self
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn probability_weight(&self) -> f64 {
        self.probability_weight
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    /// Unnormalized oscillator component for ancilla level `level`.
    pub fn component(&self, level: usize) -> DVector<C64> {
        self.amps
            .rows(level * self.fock_dim, self.fock_dim)
            .into_owned()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|x| x.norm_sqr()).sum()
    }

    fn from_components(c0: DVector<C64>, c1: DVector<C64>, weight: f64) -> Self {
        let n = c0.len();
        let mut amps = DVector::zeros(2 * n);
        amps.rows_mut(0, n).copy_from(&c0);
        amps.rows_mut(n, n).copy_from(&c1);
        Self {
            amps,
            fock_dim: n,
            probability_weight: weight,
        }
    }

    fn map_components<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&DVector<C64>) -> Result<DVector<C64>>,
    {
        Ok(Self::from_components(
            f(&self.component(0))?,
            f(&self.component(1))?,
            self.probability_weight,
        ))
    }
}

/// `exp[(alpha/2)(a† ⊗ X) - h.c.]`.
pub fn sdf(state: &HybridState, alpha: C64, conv: &Conventions) -> Result<HybridState> {
    conv.check_dim(state.fock_dim)?;
    let half = alpha * 0.5;
    let s = C64::from(FRAC_1_SQRT_2);
    let c0 = state.component(0);
    let c1 = state.component(1);
    let plus = conv.displace_raw(half, &((&c0 + &c1) * s))?;
    let minus = conv.displace_raw(-half, &((&c0 - &c1) * s))?;
    Ok(HybridState::from_components(
        (&plus + &minus) * s,
        (&plus - &minus) * s,
        state.probability_weight,
    ))
}

/// `R(theta, phi) = cos(theta/2) + i sin(theta/2) (sin(phi) X + cos(phi) Y)`
/// as a row-major 2x2 matrix.
pub fn carrier_matrix(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    [
        [C64::new(c, 0.0), C64::from_polar(s, phi)],
        [-C64::from_polar(s, -phi), C64::new(c, 0.0)],
    ]
}

pub fn carrier_rotation(state: &HybridState, theta: f64, phi: f64) -> HybridState {
    let m = carrier_matrix(theta, phi);
    let c0 = state.component(0);
    let c1 = state.component(1);
    HybridState::from_components(
        &c0 * m[0][0] + &c1 * m[0][1],
        &c0 * m[1][0] + &c1 * m[1][1],
        state.probability_weight,
    )
}

/// `D(alpha) ⊗ 1`.
pub fn displace_oscillator(
    state: &HybridState,
    alpha: C64,
    conv: &Conventions,
) -> Result<HybridState> {
    state.map_components(|v| conv.displace_raw(alpha, v))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Dark,
    Bright,
}

/// One outcome of the ancilla readout. `post_state` is `None` when the branch
/// has zero probability.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBranch {
    pub outcome: Outcome,
    pub probability: f64,
    pub post_state: Option<FockVector>,
}

impl MeasurementBranch {
    fn from_component(outcome: Outcome, comp: DVector<C64>, total: f64) -> Self {
        let w = comp.iter().map(|x| x.norm_sqr()).sum::<f64>();
        if w <= EMPTY_BRANCH || total <= EMPTY_BRANCH {
            return Self {
                outcome,
                probability: 0.0,
                post_state: None,
            };
        }
        Self {
            outcome,
            probability: w / total,
            post_state: Some(FockVector::from_amplitudes(comp / C64::from(w.sqrt()))),
        }
    }

    pub fn state(&self) -> Result<&FockVector> {
        self.post_state
            .as_ref()
            .ok_or_else(|| Error::ZeroProbability(format!("{:?} branch is empty", self.outcome)))
    }
}

/// Projects the ancilla; dark keeps `|1>`, bright keeps `|0>`.
pub fn fluorescence_measure(state: &HybridState) -> (MeasurementBranch, MeasurementBranch) {
    let total = state.norm_sqr();
    (
        MeasurementBranch::from_component(Outcome::Dark, state.component(1), total),
        MeasurementBranch::from_component(Outcome::Bright, state.component(0), total),
    )
}

/// Ancilla `|1>`, force `alpha`, readout: the dark branch carries `E+ psi`.
pub fn modular_measurement(
    osc: &FockVector,
    alpha: C64,
    conv: &Conventions,
) -> Result<(MeasurementBranch, MeasurementBranch)> {
    let hybrid = sdf(&HybridState::ancilla_one(osc), alpha, conv)?;
    Ok(fluorescence_measure(&hybrid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Real,
    Imaginary,
}

/// `Re` or `Im` of `<D(alpha)>`, evaluated directly.
pub fn modular_expectation<S: OscState + ?Sized>(
    osc: &S,
    alpha: C64,
    part: Part,
    conv: &Conventions,
) -> Result<f64> {
    let chi = crate::oscillator::displacement_expectation(osc, alpha, conv)?;
    Ok(match part {
        Part::Real => chi.re,
        Part::Imaginary => chi.im,
    })
}

/// `P(dark) - P(bright)` of the hybrid circuit. For the imaginary part a
/// carrier `R(pi/2, -pi/2)` is inserted before the readout.
pub fn modular_expectation_circuit(
    osc: &FockVector,
    alpha: C64,
    part: Part,
    conv: &Conventions,
) -> Result<f64> {
    let mut hybrid = sdf(&HybridState::ancilla_one(osc), alpha, conv)?;
    if part == Part::Imaginary {
        hybrid = carrier_rotation(&hybrid, FRAC_PI_2, -FRAC_PI_2);
    }
    let (dark, bright) = fluorescence_measure(&hybrid);
    Ok(dark.probability - bright.probability)
}

/// `D(l_axis / 2)`.
pub fn pauli_gate(
    osc: &FockVector,
    frame: &LogicalFrame,
    axis: Axis,
    conv: &Conventions,
) -> Result<FockVector> {
    conv.displace(frame.pauli_amplitude(axis), osc)
}

/// Dark branch of: ancilla `|1>`, `R(theta, phi)`, force `l_j/2`, corrective
/// `D(-l_j/4)`, readout. On the codespace the dark branch applies
/// `cos(theta/2)|+_j><+_j| + sin(theta/2) e^{i phi}|-_j><-_j|`.
pub fn teleported_gate(
    osc: &FockVector,
    frame: &LogicalFrame,
    axis: Axis,
    theta: f64,
    phi: f64,
    conv: &Conventions,
) -> Result<(FockVector, f64)> {
    let l = frame.amplitude(axis);
    let hybrid = carrier_rotation(&HybridState::ancilla_one(osc), theta, phi);
    let hybrid = sdf(&hybrid, l * 0.5, conv)?;
    let hybrid = displace_oscillator(&hybrid, -l * 0.25, conv)?;
    let (dark, _) = fluorescence_measure(&hybrid);
    let state = dark.state()?.clone();
    Ok((state, dark.probability))
}

/// One step of a preparation sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    SqueezePrep,
    Modular { alpha: C64 },
    Pauli { axis: Axis },
    Teleport { axis: Axis, theta: f64, phi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecipe {
    pub name: String,
    pub steps: Vec<Step>,
}

impl SequenceRecipe {
    pub fn validate(&self) -> Result<()> {
        match self.steps.first() {
            Some(Step::SqueezePrep) => {}
            _ => {
                return Err(Error::InvalidSequence(format!(
                    "recipe `{}` must start with squeeze_prep",
                    self.name
                )))
            }
        }
        if self.steps[1..].contains(&Step::SqueezePrep) {
            return Err(Error::InvalidSequence(format!(
                "recipe `{}`: squeeze_prep may only appear first",
                self.name
            )));
        }
        for step in &self.steps {
            let finite = match step {
                Step::Modular { alpha } => alpha.re.is_finite() && alpha.im.is_finite(),
                Step::Teleport { theta, phi, .. } => theta.is_finite() && phi.is_finite(),
                _ => true,
            };
            if !finite {
                return Err(Error::InvalidSequence(format!(
                    "recipe `{}` has a non-finite parameter",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The six logical input states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateLabel {
    #[serde(rename = "0_L")]
    Zero,
    #[serde(rename = "1_L")]
    One,
    #[serde(rename = "+_L")]
    Plus,
    #[serde(rename = "-_L")]
    Minus,
    #[serde(rename = "phi+_L")]
    PhiPlus,
    #[serde(rename = "phi-_L")]
    PhiMinus,
}

impl StateLabel {
    pub const ALL: [StateLabel; 6] = [
        StateLabel::Zero,
        StateLabel::One,
        StateLabel::Plus,
        StateLabel::Minus,
        StateLabel::PhiPlus,
        StateLabel::PhiMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StateLabel::Zero => "0_L",
            StateLabel::One => "1_L",
            StateLabel::Plus => "+_L",
            StateLabel::Minus => "-_L",
            StateLabel::PhiPlus => "phi+_L",
            StateLabel::PhiMinus => "phi-_L",
        }
    }

    /// Logical operations applied after the base sequence.
    fn tail(self) -> Vec<Step> {
        let tele = |theta: f64, phi: f64| Step::Teleport {
            axis: Axis::X,
            theta,
            phi,
        };
        match self {
            StateLabel::Zero => vec![],
            StateLabel::One => vec![Step::Pauli { axis: Axis::X }],
            StateLabel::Plus => vec![tele(0.0, 0.0)],
            StateLabel::Minus => vec![tele(PI, 0.0)],
            StateLabel::PhiPlus => vec![tele(FRAC_PI_2, FRAC_PI_2)],
            StateLabel::PhiMinus => vec![tele(FRAC_PI_2, -FRAC_PI_2)],
        }
    }

    /// Base sequence (squeeze, modular `l`, modular `l`) plus the logical
    /// tail. Unspecified phases are 0.
    pub fn recipe(self, params: &GridParams) -> SequenceRecipe {
        let alpha = C64::new(params.l, 0.0);
        let mut steps = vec![
            Step::SqueezePrep,
            Step::Modular { alpha },
            Step::Modular { alpha },
        ];
        steps.extend(self.tail());
        SequenceRecipe {
            name: self.name().to_string(),
            steps,
        }
    }

    /// Ideal logical state obtained by applying the tail to `|0>`.
    pub fn ideal_state(self) -> [C64; 2] {
        let mut psi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        for step in self.tail() {
            psi = ideal_logical_step(&step, psi);
        }
        psi
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StateLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StateLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidSequence(format!("unknown state label `{s}`")))
    }
}

/// Squeeze, modular `l`, modular `2l`: four equal components at half-integer
/// multiples of `l`.
pub fn four_component_one(params: &GridParams) -> SequenceRecipe {
    SequenceRecipe {
        name: "1_L(4)".to_string(),
        steps: vec![
            Step::SqueezePrep,
            Step::Modular {
                alpha: C64::new(params.l, 0.0),
            },
            Step::Modular {
                alpha: C64::new(2.0 * params.l, 0.0),
            },
        ],
    }
}

/// Eigenvectors `(|+_j>, |-_j>)` of the logical Pauli `j`.
pub fn logical_eigenbasis(axis: Axis) -> ([C64; 2], [C64; 2]) {
    let s = FRAC_1_SQRT_2;
    let o = C64::new(0.0, 0.0);
    match axis {
        Axis::X => (
            [C64::new(s, 0.0), C64::new(s, 0.0)],
            [C64::new(s, 0.0), C64::new(-s, 0.0)],
        ),
        Axis::Y => (
            [C64::new(s, 0.0), C64::new(0.0, s)],
            [C64::new(s, 0.0), C64::new(0.0, -s)],
        ),
        Axis::Z => ([C64::new(1.0, 0.0), o], [o, C64::new(1.0, 0.0)]),
    }
}

/// `cos(theta/2)|+_j><+_j| + sin(theta/2) e^{i phi}|-_j><-_j|`; `sqrt(2)` of
/// this is the teleported operation.
pub fn teleport_logical_operator(axis: Axis, theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let (p, m) = logical_eigenbasis(axis);
    let a = C64::from((theta / 2.0).cos());
    let b = C64::from_polar((theta / 2.0).sin(), phi);
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a * p[i] * p[j].conj() + b * m[i] * m[j].conj();
        }
    }
    out
}

pub fn pauli_matrix(axis: Axis) -> [[C64; 2]; 2] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        Axis::X => [[o, one], [one, o]],
        Axis::Y => [[o, -i], [i, o]],
        Axis::Z => [[one, o], [o, -one]],
    }
}

fn apply2(m: &[[C64; 2]; 2], v: [C64; 2]) -> [C64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Ideal action of a step on a logical qubit state (renormalized).
pub fn ideal_logical_step(step: &Step, psi: [C64; 2]) -> [C64; 2] {
    let out = match step {
        Step::Pauli { axis } => apply2(&pauli_matrix(*axis), psi),
        Step::Teleport { axis, theta, phi } => {
            apply2(&teleport_logical_operator(*axis, *theta, *phi), psi)
        }
        Step::SqueezePrep | Step::Modular { .. } => psi,
    };
    let n = (out[0].norm_sqr() + out[1].norm_sqr()).sqrt();
    if n == 0.0 {
        return out;
    }
    [out[0] / n, out[1] / n]
}

/// Applies one post-preparation step. Returns the new state and, for
/// post-selected steps, the dark-branch probability.
pub fn apply_step(
    state: &FockVector,
    step: &Step,
    frame: &LogicalFrame,
    conv: &Conventions,
) -> Result<(FockVector, Option<f64>)> {
    match step {
        Step::SqueezePrep => Err(Error::InvalidSequence(
            "squeeze_prep is only valid as the first step".into(),
        )),
        Step::Modular { alpha } => {
            let (dark, _) = modular_measurement(state, *alpha, conv)?;
            Ok((dark.state()?.clone(), Some(dark.probability)))
        }
        Step::Pauli { axis } => Ok((pauli_gate(state, frame, *axis, conv)?, None)),
        Step::Teleport { axis, theta, phi } => {
            let (out, p) = teleported_gate(state, frame, *axis, *theta, *phi, conv)?;
            Ok((out, Some(p)))
        }
    }
}

/// Final oscillator state and the product of all dark-branch probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub state: FockVector,
    pub success_probability: f64,
    pub branch_probabilities: Vec<f64>,
}

pub fn prepare_state(
    recipe: &SequenceRecipe,
    params: &GridParams,
    conv: &Conventions,
) -> Result<Prepared> {
    prepare_state_in_frame(recipe, params, &default_frame(params), conv)
}

pub fn prepare_state_in_frame(
    recipe: &SequenceRecipe,
    params: &GridParams,
    frame: &LogicalFrame,
    conv: &Conventions,
) -> Result<Prepared> {
    recipe.validate()?;
    params.validate()?;
    let mut state = squeezed_vacuum(params.r, conv)?;
    let mut probability = 1.0;
    let mut branches = Vec::new();
    for step in &recipe.steps[1..] {
        let (out, p) = apply_step(&state, step, frame, conv)?;
        state = out;
        if let Some(p) = p {
            probability *= p;
            branches.push(p);
        }
    }
    Ok(Prepared {
        state,
        success_probability: probability,
        branch_probabilities: branches,
    })
}
