//! Grid-state (GKP) qubit simulation in a truncated oscillator.

pub mod circuit;
pub mod error;
pub mod grid;
pub mod open_system;
pub mod oscillator;
pub mod phase_space;
pub mod tomography;

pub use circuit::{
    apply_step, carrier_rotation, fluorescence_measure, four_component_one, modular_expectation,
    modular_expectation_circuit, modular_measurement, pauli_gate, prepare_state, sdf,
    teleported_gate, HybridState, MeasurementBranch, Outcome, Part, Prepared, SequenceRecipe,
    StateLabel, Step,
};
pub use error::{Error, Result};
pub use grid::{
    codeword, default_frame, hadamard_frame, verify_algebra, AlgebraReport, Axis, Codeword,
    GridParams, LogicalFrame, Residual,
};
pub use num_complex::Complex64 as C64;
pub use open_system::{
    compile_recipe, compile_recipe_in_frame, dephasing_evolve, simulate_readout, simulate_recipe,
    simulate_sequence, squeezed_density, IntegratorOptions, NoiseParams, PulseSchedule, Segment,
    SimulationOutput, Timings,
};
pub use oscillator::{
    classify_commutation, commutation_phase, displacement, displacement_expectation, expectation,
    ladder_operators, squeeze, squeezed_vacuum, Commutation, Conventions, DensityMatrix,
    FockVector, Ladder, OscOperator, OscState,
};
pub use phase_space::{
    bootstrap_errors, char_function, char_scan, linspace, marginal_from_scan, wigner, CharScan,
    Marginal, Quadrature, QualityFlag, ShotRecord,
};
pub use tomography::{
    baseline_normalized, build_beta, fit_chi, logical_readout, process_fidelity,
    process_tomography, reconstruct_state, stabilizer_readout, state_fidelity, ChiFit, ChiMatrix,
    FitOptions, LogicalDensity, PauliReadout, ProcessResult, TParams,
};
