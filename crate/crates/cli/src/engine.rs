//! Glue between a run config and the simulator: preparation and readouts,
//! through the exact pipeline or the dephasing integrator.

use gkp_core::{
    circuit::prepare_state_in_frame, circuit::Part, compile_recipe_in_frame, modular_expectation,
    simulate_readout, simulate_sequence, squeezed_density, Conventions, DensityMatrix, FockVector,
    GridParams, IntegratorOptions, LogicalFrame, NoiseParams, OscState, Result, SequenceRecipe,
    Timings, C64,
};

use gkp_core::open_system::Boundary;

use crate::config::RunConfig;

#[derive(Clone, Debug)]
pub enum OscillatorState {
    Pure(FockVector),
    Mixed(DensityMatrix),
}

impl OscillatorState {
    pub fn as_osc(&self) -> &(dyn OscState + Sync) {
        match self {
            OscillatorState::Pure(v) => v,
            OscillatorState::Mixed(m) => m,
        }
    }

    pub fn density(&self) -> DensityMatrix {
        match self {
            OscillatorState::Pure(v) => v.to_density(),
            OscillatorState::Mixed(m) => m.clone(),
        }
    }

    pub fn purity(&self) -> f64 {
        match self {
            OscillatorState::Pure(_) => 1.0,
            OscillatorState::Mixed(m) => m.purity(),
        }
    }

    pub fn mean_phonon_number(&self) -> f64 {
        match self {
            OscillatorState::Pure(v) => v.mean_phonon_number(),
            OscillatorState::Mixed(m) => m.mean_phonon_number(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PreparedState {
    pub name: String,
    pub state: OscillatorState,
    pub success_probability: f64,
    pub branch_probabilities: Vec<f64>,
    /// Integrator checkpoints; empty for the exact pipeline.
    pub boundaries: Vec<Boundary>,
}

pub struct Engine {
    pub conv: Conventions,
    pub params: GridParams,
    pub frame: LogicalFrame,
    pub noise: NoiseParams,
    pub timings: Timings,
    pub opts: IntegratorOptions,
}

impl Engine {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let n = &cfg.numerics;
        Ok(Self {
            conv: Conventions::new(n.fock_dim)?.with_max_squeeze(n.max_squeeze),
            params: cfg.code.clone(),
            frame: cfg.frame(),
            noise: cfg.noise.unwrap_or_else(NoiseParams::noiseless),
            timings: cfg.timings.clone(),
            opts: IntegratorOptions {
                steps_per_segment: n.steps_per_segment,
                convergence_tolerance: n.convergence_tolerance,
                track_positivity: n.track_positivity,
            },
        })
    }

    /// Dephasing is on, so states are density matrices from the integrator.
    pub fn is_noisy(&self) -> bool {
        self.noise.gamma > 0.0
    }

    pub fn prepare(&self, recipe: &SequenceRecipe) -> Result<PreparedState> {
        if self.is_noisy() {
            self.simulate(recipe)
        } else {
            let p = prepare_state_in_frame(recipe, &self.params, &self.frame, &self.conv)?;
            Ok(PreparedState {
                name: recipe.name.clone(),
                state: OscillatorState::Pure(p.state),
                success_probability: p.success_probability,
                branch_probabilities: p.branch_probabilities,
                boundaries: Vec::new(),
            })
        }
    }

    /// Always goes through the integrator, also at zero dephasing.
    pub fn simulate(&self, recipe: &SequenceRecipe) -> Result<PreparedState> {
        let schedule = compile_recipe_in_frame(recipe, &self.frame, &self.timings)?;
        let initial = squeezed_density(&self.params, &self.conv)?;
        let out = simulate_sequence(&schedule, &initial, &self.noise, &self.conv, &self.opts)?;
        Ok(PreparedState {
            name: recipe.name.clone(),
            state: OscillatorState::Mixed(out.state),
            success_probability: out.success_probability,
            branch_probabilities: out.branch_probabilities,
            boundaries: out.boundaries,
        })
    }

    /// `P(dark) - P(bright)` of a modular readout with force `alpha`. With
    /// dephasing on, the force pulse dephases while it runs.
    pub fn readout(&self, state: &OscillatorState, alpha: C64, part: Part) -> Result<f64> {
        match state {
            OscillatorState::Mixed(rho) if self.is_noisy() => simulate_readout(
                rho,
                alpha,
                part,
                &self.noise,
                &self.timings,
                &self.conv,
                self.opts.steps_per_segment,
            ),
            other => modular_expectation(other.as_osc(), alpha, part, &self.conv),
        }
    }

    /// Pauli readout triple in `frame`.
    pub fn logical_readout(
        &self,
        state: &OscillatorState,
        frame: &LogicalFrame,
    ) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, axis) in out.iter_mut().zip(gkp_core::Axis::ALL) {
            *o = self.readout(state, frame.pauli_amplitude(axis), Part::Real)?;
        }
        Ok(out)
    }

    pub fn stabilizer_readout(&self, state: &OscillatorState) -> Result<(f64, f64)> {
        Ok((
            self.readout(
                state,
                self.frame.stabilizer_amplitude(gkp_core::Axis::X),
                Part::Real,
            )?,
            self.readout(
                state,
                self.frame.stabilizer_amplitude(gkp_core::Axis::Z),
                Part::Real,
            )?,
        ))
    }
}
