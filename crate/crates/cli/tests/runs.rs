use std::fs;
use std::path::Path;

use gkp_cli::config::Format;
use gkp_cli::output::{parse_csv, render_csv, Table};
use gkp_cli::{emit_results, read_result_file, Command, RunConfig, Value};

const SIX: &str = r#"
recipes = ["0_L", "1_L", "+_L", "-_L", "phi+_L", "phi-_L"]
seed = 7
"#;

const CODE: &str = r#"
[code]
l = 2.5066282746310002
r = 0.9
coefficients = [[-1, 1.0], [0, 2.0], [1, 1.0]]
"#;

fn config(extra: &str) -> RunConfig {
    RunConfig::from_toml_str(&format!("{SIX}\n{extra}\n{CODE}")).unwrap()
}

fn column(table: &Table, name: &str) -> Vec<f64> {
    table
        .column(name)
        .unwrap()
        .into_iter()
        .map(|v| v.as_f64().unwrap())
        .collect()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn scan_writes_one_file_per_state_and_axis() {
    let cfg = config("[scan]\nt_min = 0.0\nt_max = 1.2\npoints = 13\n");
    let rs = Command::Scan.run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&rs, Format::Csv, dir.path()).unwrap();
    assert_eq!(paths.len(), 6 * 3);
    assert_eq!(files_in(dir.path()).len(), 18);
    assert!(dir.path().join("scan_phiminus_L_y.csv").exists());
    for t in &rs.tables {
        assert_eq!(
            t.columns,
            ["t", "axis", "re_estimate", "im_estimate", "stderr", "shots"]
        );
    }
}

#[test]
fn zero_state_z_scan_revives_at_half_and_full_period() {
    let mut cfg = config("[scan]\naxes = [\"z\"]\nt_min = 0.0\nt_max = 1.2\npoints = 121\n");
    cfg.recipes.truncate(1);
    let rs = Command::Scan.run(&cfg).unwrap();
    let table = rs.table("scan_0_L_z").unwrap();
    let t = column(table, "t");
    let re = column(table, "re_estimate");
    let at = |x: f64| re[t.iter().position(|v| (v - x).abs() < 1e-9).unwrap()];
    // Local maxima at t = 1/2 (logical Z) and t = 1 (stabilizer), with dips between.
    for peak in [0.5, 1.0] {
        assert!(
            at(peak) > at(peak - 0.1) && at(peak) > at(peak + 0.1),
            "no revival at {peak}"
        );
    }
    assert!(at(0.5) > 0.85 && at(1.0) > 0.55);
    assert!(at(0.25) < 0.5 && at(0.75) < 0.5);
    assert!((at(0.0) - 1.0).abs() < 1e-12);
}

/// `P(dark) - P(bright)` from n shots has standard deviation `sqrt(1 - v^2) / sqrt(n)`.
fn binomial_sigma(v: f64, shots: u64) -> f64 {
    ((1.0 - v * v).max(0.0) / shots as f64).sqrt()
}

#[test]
fn sampled_scan_stays_within_three_sigma_of_exact() {
    let mut cfg =
        config("shots = 200\n[scan]\naxes = [\"z\"]\nt_min = 0.0\nt_max = 1.2\npoints = 121\n");
    cfg.recipes.truncate(1);
    let rs = Command::Scan.run(&cfg).unwrap();
    let table = rs.table("scan_0_L_z").unwrap();
    assert_eq!(
        table.columns,
        [
            "t",
            "axis",
            "re_estimate",
            "im_estimate",
            "stderr",
            "shots",
            "re_exact",
            "im_exact"
        ]
    );
    let mut checked = 0;
    let mut outside = 0;
    for (est, exact) in [("re_estimate", "re_exact"), ("im_estimate", "im_exact")] {
        for (e, x) in column(table, est).into_iter().zip(column(table, exact)) {
            let sigma = binomial_sigma(x, 200);
            checked += 1;
            if (e - x).abs() > 3.0 * sigma + 1e-12 {
                outside += 1;
            }
            assert!((e - x).abs() <= 5.0 * sigma + 1e-12, "{e} vs {x}");
        }
    }
    // Expected fraction outside 3 sigma is 0.27%.
    assert!(
        outside as f64 <= 0.01 * checked as f64,
        "{outside} of {checked} outside 3 sigma"
    );
    assert!(rs.table("yields").is_some());
}

/// Each point is within `3/sqrt(shots)` with probability >= 99.7%, so over a
/// few hundred points an occasional excess is expected. The check is on the
/// whole set: at most 1% beyond `3/sqrt(shots)`, none beyond `4.5/sqrt(shots)`,
/// and standardized deviations with unit mean square.
#[test]
fn sampled_scan_converges_at_large_shot_counts() {
    let shots = 100_000u64;
    let cfg = config(&format!(
        "shots = {shots}\n[scan]\nt_min = 0.0\nt_max = 1.2\npoints = 13\n"
    ));
    let rs = Command::Scan.run(&cfg).unwrap();
    let unit = 1.0 / (shots as f64).sqrt();
    let (mut n, mut beyond, mut worst, mut zsq, mut nz) = (0, 0, 0.0f64, 0.0, 0);
    for table in rs.tables.iter().filter(|t| t.name.starts_with("scan_")) {
        for (est, exact) in [("re_estimate", "re_exact"), ("im_estimate", "im_exact")] {
            for (e, x) in column(table, est).into_iter().zip(column(table, exact)) {
                let d = (e - x).abs();
                n += 1;
                beyond += usize::from(d > 3.0 * unit);
                worst = worst.max(d / unit);
                let s = binomial_sigma(x, shots);
                if s > 1e-6 {
                    zsq += (d / s).powi(2);
                    nz += 1;
                }
            }
        }
    }
    assert_eq!(n, 6 * 3 * 13 * 2);
    assert!(
        beyond as f64 <= 0.01 * n as f64,
        "{beyond} of {n} beyond 3/sqrt(shots)"
    );
    assert!(worst <= 4.5, "worst deviation {worst} / sqrt(shots)");
    let ms = zsq / nz as f64;
    assert!((ms - 1.0).abs() < 0.2, "mean squared z {ms}");
}

#[test]
fn stderr_column_tracks_binomial_width() {
    let mut cfg =
        config("shots = 400\n[scan]\naxes = [\"x\"]\nt_min = 0.0\nt_max = 1.0\npoints = 11\n");
    cfg.recipes.truncate(1);
    let rs = Command::Scan.run(&cfg).unwrap();
    let table = rs.table("scan_0_L_x").unwrap();
    for ((se, re), im) in column(table, "stderr")
        .into_iter()
        .zip(column(table, "re_estimate"))
        .zip(column(table, "im_estimate"))
    {
        let expect = binomial_sigma(re, 400).max(binomial_sigma(im, 400));
        assert!(
            (se - expect).abs() <= 0.25 * expect + 1e-3,
            "{se} vs {expect}"
        );
    }
}

#[test]
fn sampled_yields_match_post_selection_probabilities() {
    let cfg = config("shots = 4000\n");
    let rs = Command::Prepare.run(&cfg).unwrap();
    let yields = rs.table("yields").unwrap();
    let exact = column(yields, "exact_yield");
    let sampled = column(yields, "sampled_yield");
    let se = column(yields, "stderr");
    for k in 0..6 {
        let target = if k < 2 { 3.0 / 8.0 } else { 3.0 / 16.0 };
        assert!((exact[k] - target).abs() < 0.02);
        assert!(
            (sampled[k] - exact[k]).abs() <= 4.0 * se[k],
            "{} vs {}",
            sampled[k],
            exact[k]
        );
    }
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let cfg = config("shots = 200\n[scan]\nt_min = -1.0\nt_max = 1.0\npoints = 21\n");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, format) in [(&a, Format::Csv), (&b, Format::Csv)] {
        emit_results(&Command::Scan.run(&cfg).unwrap(), format, dir.path()).unwrap();
    }
    let names = files_in(a.path());
    assert_eq!(names, files_in(b.path()));
    for n in &names {
        assert_eq!(
            fs::read(a.path().join(n)).unwrap(),
            fs::read(b.path().join(n)).unwrap(),
            "{n}"
        );
    }

    let mut other = cfg.clone();
    other.seed += 1;
    let first = Command::Scan.run(&cfg).unwrap();
    let second = Command::Scan.run(&other).unwrap();
    assert_ne!(first.tables[0].rows, second.tables[0].rows);
}

#[test]
fn results_round_trip_through_csv_and_json() {
    let cfg = config("shots = 50\n[scan]\naxes = [\"y\"]\nt_min = -0.5\nt_max = 0.5\npoints = 7\n");
    let mut rs = Command::Scan.run(&cfg).unwrap();
    rs.tables.extend(Command::Prepare.run(&cfg).unwrap().tables);
    for format in [Format::Csv, Format::Json] {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_results(&rs, format, dir.path()).unwrap();
        assert_eq!(paths.len(), rs.tables.len());
        for (path, table) in paths.iter().zip(&rs.tables) {
            let (meta, back) = read_result_file(path).unwrap();
            assert_eq!(meta["config_sha256"], cfg.digest());
            assert_eq!(meta["command"], rs.command);
            assert!(meta.contains_key("code_version"));
            for (k, v) in &table.metadata {
                assert_eq!(&meta[k], v);
            }
            let mut expected = table.rounded();
            expected.metadata.clear();
            assert_eq!(back, expected, "{}", path.display());
        }
    }
}

#[test]
fn floats_are_written_at_twelve_significant_digits() {
    let mut t = Table::new("t", &["v", "label"]);
    t.push(vec![Value::Num(std::f64::consts::PI), "a,b".into()]);
    t.push(vec![Value::Num(-1.0 / 3.0e-7), "".into()]);
    let text = render_csv(&Default::default(), &t).unwrap();
    assert!(text.contains("3.14159265359,"), "{text}");
    assert!(text.contains("-3333333.33333,"), "{text}");
    let (_, back) = parse_csv("t", &text).unwrap();
    assert_eq!(back.rows[0][1], Value::Text("a,b".into()));
    assert_eq!(back, t.rounded());
}

#[test]
fn state_tomography_reports_fidelity_ceiling() {
    let rs = Command::TomographyState.run(&config("")).unwrap();
    let f = column(rs.table("state_tomography").unwrap(), "fidelity");
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    assert!((mean - 0.908).abs() <= 0.005, "{mean}");
}

const PROCESSES: &str = r#"
[[tomography.processes]]
name = "empty"

[[tomography.processes]]
name = "pauli x"
steps = [{ op = "pauli", axis = "x" }]

[[tomography.processes]]
name = "hadamard"
relabel = "hadamard"
"#;

#[test]
fn process_tomography_examples() {
    let rs = Command::TomographyProcess.run(&config(PROCESSES)).unwrap();
    let summary = rs.table("process_summary").unwrap();
    let f = column(summary, "fidelity");
    assert!(f[0] >= 0.999, "empty process {}", f[0]);
    assert!(f[1] >= 0.97, "pauli x {}", f[1]);
    assert!((f[2] - 1.0).abs() <= 1e-9, "hadamard relabel {}", f[2]);
    assert!(rs.table("process_pauli_x_chi").is_some());
    assert_eq!(rs.table("process_empty_readouts").unwrap().rows.len(), 6);
}

#[test]
fn marginals_are_normalized() {
    let mut cfg = config("");
    cfg.recipes.truncate(2);
    let rs = Command::Marginals.run(&cfg).unwrap();
    let summary = rs.table("marginal_summary").unwrap();
    for v in column(summary, "integral") {
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }
    // |1_L> sits half a lattice period from |0_L> in q.
    let means = column(summary, "mean");
    assert!(
        (means[2] - means[0] - cfg.code.l / 2.0).abs() < 1e-3,
        "{means:?}"
    );
    assert!(rs.table("marginal_1_L_p").is_some());
}

#[test]
fn wigner_grid_integrates_to_one() {
    let mut cfg = config("[wigner]\nq_min = -5.5\nq_max = 5.5\nq_points = 45\np_min = -5.5\np_max = 5.5\np_points = 45\n");
    cfg.recipes.truncate(1);
    cfg.numerics.fock_dim = 512;
    let rs = Command::Wigner.run(&cfg).unwrap();
    let w = column(rs.table("wigner_0_L").unwrap(), "w");
    let h = 11.0 / 44.0;
    let total: f64 = w.iter().sum::<f64>() * h * h;
    assert!((total - 1.0).abs() < 0.02, "{total}");
    assert!(
        w.iter().any(|&v| v < -0.05),
        "grid states have negative regions"
    );
}

#[test]
fn noiseless_simulate_matches_prepare() {
    let mut cfg = config("[numerics]\nfock_dim = 64\n");
    cfg.recipes = vec![cfg.recipes[0].clone(), cfg.recipes[2].clone()];
    let sim = Command::Simulate.run(&cfg).unwrap();
    let prep = Command::Prepare.run(&cfg).unwrap();
    let (s, p) = (
        sim.table("simulate").unwrap(),
        prep.table("prepare").unwrap(),
    );
    for col in ["success_probability", "s_x", "s_z", "x", "y", "z"] {
        for (a, b) in column(s, col).into_iter().zip(column(p, col)) {
            assert!((a - b).abs() < 1e-6, "{col}: {a} vs {b}");
        }
    }
    assert_eq!(
        sim.table("simulate_plus_L_boundaries")
            .unwrap()
            .columns
            .len(),
        3
    );
}
