//! The subcommands. Each returns a [`ResultSet`]; nothing is written here.

use std::path::PathBuf;

use gkp_core::{
    baseline_normalized, bootstrap_errors, char_scan, circuit::Part, fit_chi, linspace,
    marginal_from_scan, process_fidelity, reconstruct_state, state_fidelity,
    tomography::hadamard_readout_permutation, wigner, Axis, ChiMatrix, FitOptions, PauliReadout,
    Quadrature, SequenceRecipe, ShotRecord, StateLabel, Step, C64,
};
use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ProcessSpec, RecipeEntry, Relabel, RunConfig};
use crate::engine::{Engine, PreparedState};
use crate::output::{round12, ResultSet, Table, Value};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] gkp_core::Error),
    #[error("sampling: {0}")]
    Sampling(String),
}

pub type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Scan,
    TomographyState,
    TomographyProcess,
    Marginals,
    Wigner,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Scan => "scan",
            Command::TomographyState => "tomography-state",
            Command::TomographyProcess => "tomography-process",
            Command::Marginals => "marginals",
            Command::Wigner => "wigner",
            Command::Simulate => "simulate",
        }
    }

    pub fn run(self, cfg: &RunConfig) -> RunResult<ResultSet> {
        match self {
            Command::Prepare => run_prepare(cfg),
            Command::Scan => run_scan(cfg),
            Command::TomographyState => run_state_tomography(cfg),
            Command::TomographyProcess => run_process_tomography(cfg),
            Command::Marginals => run_marginals(cfg),
            Command::Wigner => run_wigner(cfg),
            Command::Simulate => run_simulate(cfg),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub fock_dim: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(shots) = self.shots {
            cfg.shots = shots;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(gamma) = self.noise {
            cfg.noise = Some(gkp_core::NoiseParams { gamma });
        }
        if let Some(n) = self.fock_dim {
            cfg.numerics.fock_dim = n;
        }
        cfg.validate()
    }
}

// RNG stream tags, so each kind of draw has its own sequence.
const STREAM_YIELD: u64 = 1;
const STREAM_SCAN: u64 = 2;
const STREAM_STATE: u64 = 3;
const STREAM_PROCESS: u64 = 4;

fn rng_for(seed: u64, kind: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 56) | (a << 32) | (b & 0xFFFF_FFFF));
    rng
}

/// File-name form of a state name: `+` and `-` are spelled out.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        match c {
            '+' => out.push_str("plus"),
            '-' => out.push_str("minus"),
            c if c.is_ascii_alphanumeric() || c == '_' => out.push(c),
            _ => out.push('_'),
        }
    }
    out
}

fn joined(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{:?}", round12(*v)))
        .collect::<Vec<_>>()
        .join(";")
}

fn optional(v: Option<f64>) -> Value {
    v.map(Value::Num)
        .unwrap_or_else(|| Value::Text(String::new()))
}

fn ideal_of(entry: &RecipeEntry) -> Option<[C64; 2]> {
    match entry {
        RecipeEntry::Label(l) => Some(l.ideal_state()),
        RecipeEntry::Custom(_) => None,
    }
}

fn prepare_all(engine: &Engine, recipes: &[SequenceRecipe]) -> RunResult<Vec<PreparedState>> {
    Ok(recipes
        .par_iter()
        .map(|r| engine.prepare(r))
        .collect::<gkp_core::Result<Vec<_>>>()?)
}

fn recipes_of(cfg: &RunConfig) -> Vec<SequenceRecipe> {
    cfg.recipes.iter().map(|r| r.recipe(&cfg.code)).collect()
}

/// `P(dark) - P(bright)` estimated from `shots` binomial draws.
fn sample_readout(value: f64, shots: u64, rng: &mut ChaCha8Rng) -> RunResult<ShotRecord> {
    let p = (0.5 * (1.0 + value)).clamp(0.0, 1.0);
    let dist = Binomial::new(shots, p).map_err(|e| RunError::Sampling(e.to_string()))?;
    Ok(ShotRecord {
        successes: dist.sample(rng),
        shots,
    })
}

fn estimate(rec: &ShotRecord) -> f64 {
    2.0 * rec.successes as f64 / rec.shots as f64 - 1.0
}

/// Bootstrap standard errors of `P(dark) - P(bright)`.
fn readout_errors(records: &[ShotRecord], cfg: &RunConfig, salt: u64) -> RunResult<Vec<f64>> {
    let se = bootstrap_errors(
        records,
        cfg.numerics.resamples,
        cfg.seed ^ salt.rotate_left(17),
    )?;
    Ok(se.into_iter().map(|s| 2.0 * s).collect())
}

/// Repeats each preparation until `shots` runs pass post-selection. Failed
/// attempts are counted, so the yield is a sampled quantity.
fn yields_table(cfg: &RunConfig, prepared: &[PreparedState]) -> RunResult<Table> {
    let mut table = Table::new(
        "yields",
        &[
            "state",
            "exact_yield",
            "shots",
            "attempts",
            "sampled_yield",
            "stderr",
        ],
    );
    for (i, p) in prepared.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, STREAM_YIELD, i as u64, 0);
        let y = p.success_probability;
        let geo = Geometric::new(y).map_err(|e| RunError::Sampling(format!("{}: {e}", p.name)))?;
        let failures: u64 = (0..cfg.shots).map(|_| geo.sample(&mut rng)).sum();
        let attempts = cfg.shots + failures;
        let sampled = cfg.shots as f64 / attempts as f64;
        table.push(vec![
            p.name.clone().into(),
            y.into(),
            cfg.shots.into(),
            attempts.into(),
            sampled.into(),
            (sampled * (1.0 - sampled) / attempts as f64).sqrt().into(),
        ]);
    }
    Ok(table)
}

pub fn run_prepare(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let prepared = prepare_all(&engine, &recipes_of(cfg))?;
    let mut table = Table::new(
        "prepare",
        &[
            "state",
            "success_probability",
            "branch_probabilities",
            "s_x",
            "s_z",
            "x",
            "y",
            "z",
            "fidelity",
            "purity",
            "mean_phonon_number",
        ],
    )
    .meta("fock_dim", cfg.numerics.fock_dim)
    .meta("gamma", engine.noise.gamma);
    let rows: Vec<_> = prepared
        .par_iter()
        .zip(cfg.recipes.par_iter())
        .map(|(p, entry)| -> RunResult<Vec<Value>> {
            let (sx, sz) = engine.stabilizer_readout(&p.state)?;
            let b = engine.logical_readout(&p.state, &engine.frame)?;
            let fid = ideal_of(entry).map(|ideal| state_fidelity(&reconstruct_state(b), ideal));
            Ok(vec![
                p.name.clone().into(),
                p.success_probability.into(),
                joined(&p.branch_probabilities).into(),
                sx.into(),
                sz.into(),
                b[0].into(),
                b[1].into(),
                b[2].into(),
                optional(fid),
                p.state.purity().into(),
                p.state.mean_phonon_number().into(),
            ])
        })
        .collect::<RunResult<_>>()?;
    for row in rows {
        table.push(row);
    }
    let mut rs = ResultSet::new(Command::Prepare.name(), cfg.digest());
    rs.tables.push(table);
    if cfg.shots > 0 {
        rs.tables.push(yields_table(cfg, &prepared)?);
    }
    Ok(rs)
}

/// One file per state and axis. `t` multiplies the axis amplitude `l_j`.
pub fn run_scan(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let prepared = prepare_all(&engine, &recipes_of(cfg))?;
    let ts = linspace(cfg.scan.t_min, cfg.scan.t_max, cfg.scan.points);
    let sampled = cfg.shots > 0;
    let mut columns = vec!["t", "axis", "re_estimate", "im_estimate", "stderr", "shots"];
    if sampled {
        columns.extend(["re_exact", "im_exact"]);
    }
    let mut rs = ResultSet::new(Command::Scan.name(), cfg.digest());
    for (i, p) in prepared.iter().enumerate() {
        for (a, &axis) in cfg.scan.axes.iter().enumerate() {
            let l = engine.frame.amplitude(axis);
            let exact: Vec<(f64, f64)> = ts
                .par_iter()
                .map(|&t| -> gkp_core::Result<(f64, f64)> {
                    Ok((
                        engine.readout(&p.state, l * t, Part::Real)?,
                        engine.readout(&p.state, l * t, Part::Imaginary)?,
                    ))
                })
                .collect::<gkp_core::Result<_>>()?;
            let mut table = Table::new(format!("scan_{}_{}", slug(&p.name), axis.name()), &columns)
                .meta("state", &p.name)
                .meta("axis", axis.name())
                .meta("l_re", l.re)
                .meta("l_im", l.im);
            if !sampled {
                for (&t, &(re, im)) in ts.iter().zip(&exact) {
                    table.push(vec![
                        t.into(),
                        axis.name().into(),
                        re.into(),
                        im.into(),
                        0.0.into(),
                        0u64.into(),
                    ]);
                }
            } else {
                let stream = ((i as u64) << 8) | a as u64;
                let mut re_rec = Vec::with_capacity(ts.len());
                let mut im_rec = Vec::with_capacity(ts.len());
                for (k, &(re, im)) in exact.iter().enumerate() {
                    let mut rng = rng_for(cfg.seed, STREAM_SCAN, stream, k as u64);
                    re_rec.push(sample_readout(re, cfg.shots, &mut rng)?);
                    im_rec.push(sample_readout(im, cfg.shots, &mut rng)?);
                }
                let re_se = readout_errors(&re_rec, cfg, 2 * stream)?;
                let im_se = readout_errors(&im_rec, cfg, 2 * stream + 1)?;
                for k in 0..ts.len() {
                    table.push(vec![
                        ts[k].into(),
                        axis.name().into(),
                        estimate(&re_rec[k]).into(),
                        estimate(&im_rec[k]).into(),
                        re_se[k].max(im_se[k]).into(),
                        cfg.shots.into(),
                        exact[k].0.into(),
                        exact[k].1.into(),
                    ]);
                }
            }
            rs.tables.push(table);
        }
    }
    if sampled {
        rs.tables.push(yields_table(cfg, &prepared)?);
    }
    Ok(rs)
}

/// Exact triple, or the triple from binomial draws plus bootstrap errors.
fn sampled_triple(
    exact: [f64; 3],
    cfg: &RunConfig,
    kind: u64,
    stream: u64,
) -> RunResult<([f64; 3], [f64; 3])> {
    if cfg.shots == 0 {
        return Ok((exact, [0.0; 3]));
    }
    let mut records = Vec::with_capacity(3);
    for (k, v) in exact.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, kind, stream, k as u64);
        records.push(sample_readout(*v, cfg.shots, &mut rng)?);
    }
    let se = readout_errors(&records, cfg, (kind << 40) | stream)?;
    Ok((
        [0, 1, 2].map(|k| estimate(&records[k])),
        [se[0], se[1], se[2]],
    ))
}

pub fn run_state_tomography(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let prepared = prepare_all(&engine, &recipes_of(cfg))?;
    let mut table = Table::new(
        "state_tomography",
        &[
            "state",
            "x",
            "y",
            "z",
            "stderr_x",
            "stderr_y",
            "stderr_z",
            "x_exact",
            "y_exact",
            "z_exact",
            "bloch_length",
            "fidelity",
        ],
    );
    for (i, (p, entry)) in prepared.iter().zip(&cfg.recipes).enumerate() {
        let exact = engine.logical_readout(&p.state, &engine.frame)?;
        let (b, se) = sampled_triple(exact, cfg, STREAM_STATE, i as u64)?;
        let rho = reconstruct_state(b);
        let fid = ideal_of(entry).map(|ideal| state_fidelity(&rho, ideal));
        table.push(vec![
            p.name.clone().into(),
            b[0].into(),
            b[1].into(),
            b[2].into(),
            se[0].into(),
            se[1].into(),
            se[2].into(),
            exact[0].into(),
            exact[1].into(),
            exact[2].into(),
            (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt().into(),
            optional(fid),
        ]);
    }
    let mut rs = ResultSet::new(Command::TomographyState.name(), cfg.digest());
    rs.tables.push(table);
    Ok(rs)
}

fn m2(m: [[C64; 2]; 2]) -> Matrix2<C64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// Ideal logical map of a process, scaled so `Tr(K^dag K) = 2`.
fn ideal_chi(process: &ProcessSpec) -> ChiMatrix {
    if process.relabel == Some(Relabel::Hadamard) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = Matrix2::new(C64::from(s), C64::from(s), C64::from(s), C64::from(-s));
        return ChiMatrix::from_unitary(&h);
    }
    // Columns of K are the images of |0> and |1>, before normalization.
    let mut k = Matrix2::<C64>::identity();
    for step in &process.steps {
        let m = match step {
            Step::Pauli { axis } => m2(gkp_core::circuit::pauli_matrix(*axis)),
            Step::Teleport { axis, theta, phi } => m2(
                gkp_core::circuit::teleport_logical_operator(*axis, *theta, *phi),
            ),
            Step::SqueezePrep | Step::Modular { .. } => Matrix2::identity(),
        };
        k = m * k;
    }
    let norm = (k.adjoint() * k).trace().re;
    if norm > 0.0 {
        k *= C64::from((2.0 / norm).sqrt());
    }
    ChiMatrix::from_unitary(&k)
}

/// Six table inputs; each process is appended to the input recipe, or (for a
/// relabeling) applied to the readout triple.
pub fn run_process_tomography(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let labels = StateLabel::ALL;
    let input_recipes: Vec<SequenceRecipe> = labels.iter().map(|l| l.recipe(&cfg.code)).collect();
    let inputs = prepare_all(&engine, &input_recipes)?;
    let exact_in: Vec<[f64; 3]> = inputs
        .par_iter()
        .map(|p| engine.logical_readout(&p.state, &engine.frame))
        .collect::<gkp_core::Result<_>>()?;
    let opts = FitOptions {
        starts: cfg.tomography.starts,
        seed: cfg.seed,
        max_iterations: cfg.tomography.max_iterations,
    };

    let mut rs = ResultSet::new(Command::TomographyProcess.name(), cfg.digest());
    let mut summary = Table::new(
        "process_summary",
        &[
            "process",
            "fidelity",
            "normalized_fidelity",
            "objective",
            "constraint_residual",
            "converged",
            "min_eigenvalue",
        ],
    );
    for (pi, process) in cfg.tomography.processes.iter().enumerate() {
        let exact_out: Vec<[f64; 3]> = match process.relabel {
            Some(Relabel::Hadamard) => exact_in
                .iter()
                .map(|b| hadamard_readout_permutation(*b))
                .collect(),
            None => {
                let recipes: Vec<SequenceRecipe> = input_recipes
                    .iter()
                    .map(|r| {
                        let mut steps = r.steps.clone();
                        steps.extend(process.steps.iter().cloned());
                        SequenceRecipe {
                            name: format!("{}|{}", r.name, process.name),
                            steps,
                        }
                    })
                    .collect();
                prepare_all(&engine, &recipes)?
                    .par_iter()
                    .map(|p| engine.logical_readout(&p.state, &engine.frame))
                    .collect::<gkp_core::Result<_>>()?
            }
        };
        let mut rows_in = Vec::with_capacity(labels.len());
        let mut rows_out = Vec::with_capacity(labels.len());
        for k in 0..labels.len() {
            let stream = ((pi as u64) << 8) | k as u64;
            rows_in.push(sampled_triple(exact_in[k], cfg, STREAM_PROCESS, stream << 1)?.0);
            rows_out.push(sampled_triple(exact_out[k], cfg, STREAM_PROCESS, (stream << 1) | 1)?.0);
        }
        let fit = fit_chi(
            &PauliReadout::from_bloch(&rows_in)?,
            &PauliReadout::from_bloch(&rows_out)?,
            &opts,
        )?;
        let normalized = fit_chi(
            &PauliReadout::from_bloch(&baseline_normalized(&rows_in))?,
            &PauliReadout::from_bloch(&baseline_normalized(&rows_out))?,
            &opts,
        )?;
        let ideal = ideal_chi(process);
        let f = process_fidelity(&fit.chi, &ideal);
        let fn_ = process_fidelity(&normalized.chi, &ideal);
        summary.push(vec![
            process.name.clone().into(),
            f.into(),
            fn_.into(),
            fit.objective.into(),
            fit.constraint_residual.into(),
            fit.converged.to_string().into(),
            fit.chi.min_eigenvalue().into(),
        ]);

        let name = slug(&process.name);
        let mut chi = Table::new(
            format!("process_{name}_chi"),
            &["row", "col", "re", "im", "re_normalized", "im_normalized"],
        )
        .meta("process", &process.name)
        .meta("fidelity", round12(f))
        .meta("normalized_fidelity", round12(fn_));
        for r in 0..4 {
            for c in 0..4 {
                let a = fit.chi.matrix()[(r, c)];
                let b = normalized.chi.matrix()[(r, c)];
                chi.push(vec![
                    r.into(),
                    c.into(),
                    a.re.into(),
                    a.im.into(),
                    b.re.into(),
                    b.im.into(),
                ]);
            }
        }
        let mut readouts = Table::new(
            format!("process_{name}_readouts"),
            &["input", "in_x", "in_y", "in_z", "out_x", "out_y", "out_z"],
        )
        .meta("process", &process.name);
        for (k, label) in labels.iter().enumerate() {
            let (i, o) = (rows_in[k], rows_out[k]);
            readouts.push(vec![
                label.name().into(),
                i[0].into(),
                i[1].into(),
                i[2].into(),
                o[0].into(),
                o[1].into(),
                o[2].into(),
            ]);
        }
        rs.tables.push(chi);
        rs.tables.push(readouts);
    }
    rs.tables.insert(0, summary);
    Ok(rs)
}

/// Quadrature marginals from characteristic-function scans. `P(q)` scans
/// along `i|l_z|`, `P(p)` along `|l_x|`. Always exact.
pub fn run_marginals(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let prepared = prepare_all(&engine, &recipes_of(cfg))?;
    let ts = linspace(
        cfg.marginals.t_min,
        cfg.marginals.t_max,
        cfg.marginals.points,
    );
    let mut summary = Table::new(
        "marginal_summary",
        &[
            "state",
            "quadrature",
            "integral",
            "mean",
            "variance",
            "min_density",
            "parseval_defect",
            "flags",
        ],
    );
    let mut rs = ResultSet::new(Command::Marginals.name(), cfg.digest());
    for p in &prepared {
        for (target, axis) in [
            (
                Quadrature::Q,
                C64::new(0.0, engine.frame.amplitude(Axis::Z).norm()),
            ),
            (
                Quadrature::P,
                C64::new(engine.frame.amplitude(Axis::X).norm(), 0.0),
            ),
        ] {
            let scan = char_scan(p.state.as_osc(), axis, &ts, &engine.conv)?;
            let m = marginal_from_scan(&scan, target, cfg.numerics.padding)?;
            let q = match target {
                Quadrature::Q => "q",
                Quadrature::P => "p",
            };
            let (mean, var) = m.moments();
            let flags = m
                .flags
                .iter()
                .map(|f| format!("{f:?}"))
                .collect::<Vec<_>>()
                .join(";");
            summary.push(vec![
                p.name.clone().into(),
                q.into(),
                m.integral.into(),
                mean.into(),
                var.into(),
                m.min_density.into(),
                m.parseval_defect.into(),
                flags.into(),
            ]);
            let mut table =
                Table::new(format!("marginal_{}_{q}", slug(&p.name)), &["x", "density"])
                    .meta("state", &p.name)
                    .meta("quadrature", q);
            for (x, d) in m.grid.iter().zip(&m.density) {
                table.push(vec![(*x).into(), (*d).into()]);
            }
            rs.tables.push(table);
        }
    }
    rs.tables.insert(0, summary);
    Ok(rs)
}

pub fn run_wigner(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let prepared = prepare_all(&engine, &recipes_of(cfg))?;
    let w = &cfg.wigner;
    let qs = linspace(w.q_min, w.q_max, w.q_points);
    let ps = linspace(w.p_min, w.p_max, w.p_points);
    let mut rs = ResultSet::new(Command::Wigner.name(), cfg.digest());
    for p in &prepared {
        let grid = wigner(&p.state.density(), &qs, &ps, &engine.conv)?;
        let mut table = Table::new(format!("wigner_{}", slug(&p.name)), &["q", "p", "w"])
            .meta("state", &p.name);
        for (i, &q) in qs.iter().enumerate() {
            for (j, &pv) in ps.iter().enumerate() {
                table.push(vec![q.into(), pv.into(), grid[(i, j)].into()]);
            }
        }
        rs.tables.push(table);
    }
    Ok(rs)
}

/// Hybrid density-matrix simulation of every recipe, with the config's
/// dephasing rate (zero if none is given).
pub fn run_simulate(cfg: &RunConfig) -> RunResult<ResultSet> {
    let engine = Engine::from_config(cfg)?;
    let recipes = recipes_of(cfg);
    let sims = recipes
        .par_iter()
        .map(|r| engine.simulate(r))
        .collect::<gkp_core::Result<Vec<_>>>()?;
    let mut table = Table::new(
        "simulate",
        &[
            "state",
            "success_probability",
            "branch_probabilities",
            "s_x",
            "s_z",
            "x",
            "y",
            "z",
            "fidelity",
            "purity",
        ],
    )
    .meta("gamma", engine.noise.gamma)
    .meta("steps_per_segment", cfg.numerics.steps_per_segment);
    let rows: Vec<_> = sims
        .par_iter()
        .zip(cfg.recipes.par_iter())
        .map(|(s, entry)| -> RunResult<Vec<Value>> {
            let (sx, sz) = engine.stabilizer_readout(&s.state)?;
            let b = engine.logical_readout(&s.state, &engine.frame)?;
            let fid = ideal_of(entry).map(|ideal| state_fidelity(&reconstruct_state(b), ideal));
            Ok(vec![
                s.name.clone().into(),
                s.success_probability.into(),
                joined(&s.branch_probabilities).into(),
                sx.into(),
                sz.into(),
                b[0].into(),
                b[1].into(),
                b[2].into(),
                optional(fid),
                s.state.purity().into(),
            ])
        })
        .collect::<RunResult<_>>()?;
    for row in rows {
        table.push(row);
    }
    let mut rs = ResultSet::new(Command::Simulate.name(), cfg.digest());
    rs.tables.push(table);
    for s in &sims {
        let mut b = Table::new(
            format!("simulate_{}_boundaries", slug(&s.name)),
            &["segment", "trace", "min_eigenvalue"],
        )
        .meta("state", &s.name);
        for x in &s.boundaries {
            b.push(vec![
                x.segment.into(),
                x.trace.into(),
                optional(x.min_eigenvalue),
            ]);
        }
        rs.tables.push(b);
    }
    Ok(rs)
}
