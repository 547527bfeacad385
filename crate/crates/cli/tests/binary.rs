use std::fs;
use std::process::Command;

const CONFIG: &str = r#"
recipes = ["0_L", "1_L"]

[code]
l = 2.5066282746310002
r = 0.9
coefficients = [[-1, 1.0], [0, 2.0], [1, 1.0]]

[output]
format = "json"
"#;

#[test]
fn prepare_writes_files_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_gkp"))
        .args(["prepare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--shots", "100", "--seed", "3", "--fock-dim", "128"])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let listed = String::from_utf8(status.stdout).unwrap();
    assert_eq!(listed.lines().count(), 2);
    let text = fs::read_to_string(out.join("prepare.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["metadata"]["fock_dim"], "128");
    assert_eq!(json["metadata"]["command"], "prepare");
    assert!(out.join("yields.json").exists());
}

#[test]
fn invalid_config_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        CONFIG.replace(r#"recipes = ["0_L", "1_L"]"#, "recipes = []"),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gkp"))
        .args(["scan", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("recipes"));
}

#[test]
fn negative_noise_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gkp"))
        .args(["simulate", "--noise=-2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise.gamma"));
}
