//! GKP code definition: parameters, logical frame, approximate codewords and
//! the displacement algebra of the logical operators.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{
    displacement, displacement_expectation, squeezed_vacuum, Conventions, FockVector, OscOperator,
};
use crate::C64;

/// Code parameters of a finite grid state `sum_k c_k D(k l) S(r)|0>`.
///
/// Coefficients are kept unnormalized (`{-1: 1, 0: 2, 1: 1}`); normalization
/// happens when the state is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub l: f64,
    pub r: f64,
    #[serde(with = "coefficient_pairs")]
    pub coefficients: BTreeMap<i32, f64>,
}

mod coefficient_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<i32, f64>, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<(i32, f64)> = map.iter().map(|(&k, &c)| (k, c)).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i32, f64>, D::Error> {
        let pairs = Vec::<(i32, f64)>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for (k, c) in pairs {
            if map.insert(k, c).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate coefficient index {k}"
                )));
            }
        }
        Ok(map)
    }
}

impl GridParams {
    pub fn new(l: f64, r: f64, coefficients: BTreeMap<i32, f64>) -> Result<Self> {
        let p = Self { l, r, coefficients };
        p.validate()?;
        Ok(p)
    }

    /// `l = sqrt(2 pi)`, `r = 0.9`, `c = {1, 2, 1}`.
    pub fn standard() -> Self {
        Self::new(
            (2.0 * PI).sqrt(),
            0.9,
            [(-1, 1.0), (0, 2.0), (1, 1.0)].into(),
        )
        .expect("standard parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::InvalidParams(format!(
                "l must be positive, got {}",
                self.l
            )));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "r must be >= 0, got {}",
                self.r
            )));
        }
        if self.coefficients.values().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("coefficients must be finite".into()));
        }
        if self.coefficients.values().all(|&c| c == 0.0) {
            return Err(Error::InvalidParams(
                "at least one coefficient must be nonzero".into(),
            ));
        }
        Ok(())
    }

    pub fn k_max(&self) -> i32 {
        self.coefficients.keys().map(|k| k.abs()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidParams(format!("unknown axis `{other}`"))),
        }
    }
}

/// The three readout directions. Paulis are `D(l_j/2)`, stabilizers `D(l_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameSpec", into = "FrameSpec")]
pub struct LogicalFrame {
    l_x: C64,
    l_y: C64,
    l_z: C64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSpec {
    l_x: C64,
    l_z: C64,
}

impl TryFrom<FrameSpec> for LogicalFrame {
    type Error = Error;
    fn try_from(spec: FrameSpec) -> Result<Self> {
        LogicalFrame::new(spec.l_x, spec.l_z)
    }
}

impl From<LogicalFrame> for FrameSpec {
    fn from(f: LogicalFrame) -> Self {
        FrameSpec {
            l_x: f.l_x,
            l_z: f.l_z,
        }
    }
}

impl LogicalFrame {
    /// Builds the frame with `l_y = -l_x - l_z`, checking `Im(l_z l_x*) = 2 pi`.
    pub fn new(l_x: C64, l_z: C64) -> Result<Self> {
        let area = (l_z * l_x.conj()).im;
        let tol = 1e-12 * (l_x.norm() * l_z.norm()).max(1.0);
        if !area.is_finite() || (area - 2.0 * PI).abs() > tol {
            return Err(Error::InvalidFrame(format!(
                "Im(l_z l_x*) = {area} but must equal 2 pi"
            )));
        }
        Ok(Self {
            l_x,
            l_y: -l_x - l_z,
            l_z,
        })
    }

    pub fn amplitude(&self, axis: Axis) -> C64 {
        match axis {
            Axis::X => self.l_x,
            Axis::Y => self.l_y,
            Axis::Z => self.l_z,
        }
    }

    pub fn pauli_amplitude(&self, axis: Axis) -> C64 {
        self.amplitude(axis) * 0.5
    }

    pub fn stabilizer_amplitude(&self, axis: Axis) -> C64 {
        self.amplitude(axis)
    }
}

pub fn default_frame(params: &GridParams) -> LogicalFrame {
    LogicalFrame::new(C64::new(params.l, 0.0), C64::new(0.0, 2.0 * PI / params.l))
        .expect("default frame satisfies the area condition")
}

/// Quarter turn of phase space: every direction is multiplied by `-i`.
///
/// For the default frame the new x direction is `-l_z` and the new z
/// direction is `l_x`, so X and Z readouts swap. Two applications give `-l_j`,
/// which reads out the same Paulis.
pub fn hadamard_frame(frame: &LogicalFrame) -> LogicalFrame {
    let rot = C64::new(0.0, -1.0);
    LogicalFrame::new(frame.l_x * rot, frame.l_z * rot).expect("rotation preserves area")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Codeword {
    Zero,
    One,
}

fn check_codeword_guard(params: &GridParams, conv: &Conventions) -> Result<()> {
    let reach = params.k_max() as f64 * params.l + 0.5 * params.l;
    conv.check_displacement(C64::new(reach, 0.0))
}

/// Normalized `|0>_L ∝ sum_k c_k D(k l)|r>` or `|1>_L = D(l/2)|0>_L`.
pub fn codeword(params: &GridParams, label: Codeword, conv: &Conventions) -> Result<FockVector> {
    params.validate()?;
    check_codeword_guard(params, conv)?;
    let base = squeezed_vacuum(params.r, conv)?;
    let mut acc = nalgebra::DVector::<C64>::zeros(conv.fock_dim());
    for (&k, &c) in &params.coefficients {
        if c == 0.0 {
            continue;
        }
        let shifted = conv.displace(C64::new(k as f64 * params.l, 0.0), &base)?;
        acc += shifted.amplitudes() * C64::from(c);
    }
    let (zero, _) = FockVector::from_amplitudes(acc)
        .normalized()
        .ok_or_else(|| Error::InvalidParams("codeword components cancel".into()))?;
    match label {
        Codeword::Zero => Ok(zero),
        Codeword::One => conv.displace(C64::new(0.5 * params.l, 0.0), &zero),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

/// Operator identities (exact up to truncation) and codespace residuals
/// (limited by finite squeezing and `k_max`), kept apart.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraReport {
    /// Columns `n < block` were compared.
    pub block: usize,
    pub identities: Vec<Residual>,
    pub codespace: Vec<Residual>,
    /// `<mu_L|S_j|mu_L>` for `mu ∈ {0, 1}`, `j ∈ {x, z}`.
    pub stabilizer_means: Vec<Residual>,
}

impl AlgebraReport {
    pub fn max_identity_residual(&self) -> f64 {
        self.identities.iter().map(|r| r.value).fold(0.0, f64::max)
    }
}

pub fn verify_algebra(params: &GridParams, conv: &Conventions) -> Result<AlgebraReport> {
    let frame = default_frame(params);
    let block = conv.fock_dim() / 4 + 1;
    let x = displacement(frame.pauli_amplitude(Axis::X), conv)?;
    let y = displacement(frame.pauli_amplitude(Axis::Y), conv)?;
    let z = displacement(frame.pauli_amplitude(Axis::Z), conv)?;
    let sx = displacement(frame.stabilizer_amplitude(Axis::X), conv)?;
    let sz = displacement(frame.stabilizer_amplitude(Axis::Z), conv)?;
    let i = C64::new(0.0, 1.0);

    let checks: Vec<(&str, OscOperator, OscOperator)> = vec![
        ("X^2 = S_x", &x * &x, sx.clone()),
        ("Y^2 = S_x† S_z†", &y * &y, &sx.adjoint() * &sz.adjoint()),
        ("Z^2 = S_z", &z * &z, sz.clone()),
        ("XY = iZ†", &x * &y, z.adjoint().scale(i)),
        ("XZ = -iY†", &x * &z, y.adjoint().scale(-i)),
        ("YZ = iX†", &y * &z, x.adjoint().scale(i)),
    ];
    let identities = checks
        .into_iter()
        .map(|(name, lhs, rhs)| Residual {
            name: name.to_string(),
            value: lhs.block_residual(&rhs, block),
        })
        .collect();

    let mut codespace = Vec::new();
    let mut stabilizer_means = Vec::new();
    for (label, tag) in [(Codeword::Zero, "0"), (Codeword::One, "1")] {
        let mu = codeword(params, label, conv)?;
        for (axis, op) in [(Axis::X, &sx), (Axis::Z, &sz)] {
            let moved = op.apply(&mu)?;
            let diff = moved.amplitudes() - mu.amplitudes();
            codespace.push(Residual {
                name: format!("(S_{} - 1)|{tag}_L>", axis.name()),
                value: diff.norm(),
            });
            stabilizer_means.push(Residual {
                name: format!("<{tag}_L|S_{}|{tag}_L>", axis.name()),
                value: displacement_expectation(&mu, frame.stabilizer_amplitude(axis), conv)?.re,
            });
        }
    }

    Ok(AlgebraReport {
        block,
        identities,
        codespace,
        stabilizer_means,
    })
}
