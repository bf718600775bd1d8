//! End-to-end behaviors of the scenario pipeline and the CLI binary.

use std::path::Path;
use std::process::Command;

use cutmix::driver::{self, Sweep};
use cutmix::scenario::{RveChoice, Scenario};

fn preset(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cutmix_pipeline_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn binary_runs_preset_and_reports_errors() {
    let bin = env!("CARGO_BIN_EXE_cutmix");
    let dir = tmp_dir("bin");

    // successful run writes artifacts and exits 0
    let out = Command::new(bin)
        .args(["run", "--config"])
        .arg(preset("homogeneous_plate.toml"))
        .arg("--out")
        .arg(dir.join("ok"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("ok/fields.vtk").exists());
    assert!(dir.join("ok/metrics.csv").exists());
    assert!(dir.join("ok/scenario.toml").exists());

    // missing file: io category, nonzero exit, single line
    let out = Command::new(bin)
        .args(["run", "--config", "/nonexistent/x.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: io:"), "stderr: {stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1);

    // invalid config: config category
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "name = \"broken\"\n").unwrap();
    let out = Command::new(bin)
        .args(["run", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: config:"), "stderr: {stderr}");

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn echoed_scenario_reproduces_run_byte_for_byte() {
    let dir = tmp_dir("roundtrip");
    let scenario = Scenario::load(&preset("local_pores.toml")).unwrap();
    driver::run(&scenario, Some(&dir.join("first"))).unwrap();

    let echoed = Scenario::load(&dir.join("first/scenario.toml")).unwrap();
    driver::run(&echoed, Some(&dir.join("second"))).unwrap();

    let a = std::fs::read(dir.join("first/fields.vtk")).unwrap();
    let b = std::fs::read(dir.join("second/fields.vtk")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir.join("first/metrics.csv")).unwrap();
    let b = std::fs::read(dir.join("second/metrics.csv")).unwrap();
    assert_eq!(a, b);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn prescribed_top_displacement_is_exact() {
    let scenario = Scenario::load(&preset("local_pores.toml")).unwrap();
    let result = driver::run(&scenario, None).unwrap();
    let top = scenario.domain.max[1];
    let mut found = 0;
    for (i, p) in result.mesh.nodes().iter().enumerate() {
        if p[1] == top {
            assert_eq!(result.displacement[2 * i + 1], -0.1);
            assert_eq!(result.displacement[2 * i], 0.0);
            found += 1;
        }
    }
    assert!(found > 10);
}

#[test]
fn rerun_with_other_width_changes_only_width_and_derived_columns() {
    let dir = tmp_dir("widths");
    let run_with = |width: f64, out: &Path| {
        let mut scenario = Scenario::load(&preset("local_pores.toml")).unwrap();
        scenario.mixing.width = width;
        scenario.solver.condition = false;
        driver::run(&scenario, Some(out)).unwrap();
        let text = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
        let row = text.lines().nth(1).unwrap().to_string();
        row.split(',').map(str::to_string).collect::<Vec<_>>()
    };
    let narrow = run_with(0.1, &dir.join("narrow"));
    let wide = run_with(1.0, &dir.join("wide"));

    // columns: h_min, h_max, two_epsilon, beta, mode, dofs, kappa, iters, errors
    // the band width changes only its own column and derived quantities
    // (active DOF count, condition estimate)
    assert_eq!(narrow[0], wide[0]);
    assert_eq!(narrow[1], wide[1]);
    assert_ne!(narrow[2], wide[2]);
    assert_eq!(narrow[3], wide[3]);
    assert_eq!(narrow[4], wide[4]);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn homogeneous_cond_slope_matches_fem_baseline() {
    let dir = tmp_dir("fem_baseline");
    let base = dir.join("base.toml");
    std::fs::write(
        &base,
        r#"
name = "fem_baseline"

[domain]
min = [0.0, 0.0]
max = [1.0, 1.0]

[mesh]
nx = 4
ny = 4

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = { e = 1.0, nu = 0.3 }

[bc]
clamped = "bottom"
loaded = "top"
traction = [0.0, -0.01]
"#,
    )
    .unwrap();
    let sweep_path = dir.join("sweep.toml");
    std::fs::write(
        &sweep_path,
        r#"
base = "base.toml"
meshes = [[4, 4], [8, 8], [16, 16], [32, 32]]
"#,
    )
    .unwrap();
    let sweep = Sweep::load(&sweep_path).unwrap();
    let study = driver::condstudy(&sweep, None).unwrap();
    assert_eq!(study.slopes.len(), 1);
    let p = study.slopes[0].exponent;
    assert!((p - 2.0).abs() <= 0.2, "plain FEM slope {p}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn denser_zoom_pores_give_smaller_inside_zoom_modulus() {
    // pores concentrated inside the zoom: the zoom-restricted reference
    // region sees a higher porosity than the whole domain
    let text = r#"
name = "rve_contrast"

[domain]
min = [0.0, 0.0]
max = [12.0, 10.0]

[mesh]
nx = 12
ny = 10

[[zooms]]
center = [6.0, 5.0]
radius = 2.0

[[pores]]
center = [5.5, 5.0]
radius = 0.5

[[pores]]
center = [6.8, 5.3]
radius = 0.4

[[pores]]
center = [6.0, 4.0]
radius = 0.45

[[pores]]
center = [1.5, 1.5]
radius = 0.3

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = "auto"
rve = "whole_domain"

[bc]
clamped = "bottom"
loaded = "top"
traction = [0.0, -0.01]
"#;
    let mut scenario = Scenario::from_toml_str(text, Path::new(".")).unwrap();
    let whole = driver::homogenize_report(&scenario).unwrap();
    scenario.materials.rve = Some(RveChoice::InsideZooms);
    let zoomed = driver::homogenize_report(&scenario).unwrap();
    assert!(zoomed.total_porosity > whole.total_porosity);
    assert!(zoomed.effective < whole.effective);
}

#[test]
fn validate_flags_cells_cut_by_two_interfaces() {
    let text = r#"
name = "multicut"

[domain]
min = [0.0, 0.0]
max = [12.0, 10.0]

[mesh]
nx = 6
ny = 5

[[pores]]
center = [4.2, 4.2]
radius = 0.5

[[pores]]
center = [5.8, 4.2]
radius = 0.5

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = { e = 1.0, nu = 0.3 }

[bc]
clamped = "bottom"
loaded = "top"
traction = [0.0, -0.01]
"#;
    let scenario = Scenario::from_toml_str(text, Path::new(".")).unwrap();
    let report = driver::validate(&scenario, 0).unwrap();
    assert!(
        report.warnings.iter().any(|w| w.contains("pore interfaces")),
        "warnings: {:?}",
        report.warnings
    );
}

#[test]
fn reference_pointer_fills_error_columns() {
    let dir = tmp_dir("reference");
    std::fs::write(
        dir.join("ref.toml"),
        r#"
name = "ref"

[domain]
min = [0.0, 0.0]
max = [2.0, 1.0]

[mesh]
nx = 32
ny = 16

[solver]
condition = false

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = { e = 1.0, nu = 0.3 }

[bc]
clamped = "bottom"
loaded = "top"
displacement = [0.0, -0.05]
"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("coarse.toml"),
        r#"
name = "coarse"

[domain]
min = [0.0, 0.0]
max = [2.0, 1.0]

[mesh]
nx = 8
ny = 4

[solver]
condition = false

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = { e = 1.0, nu = 0.3 }

[bc]
clamped = "bottom"
loaded = "top"
displacement = [0.0, -0.05]

[reference]
scenario = "ref.toml"
"#,
    )
    .unwrap();
    let scenario = Scenario::load(&dir.join("coarse.toml")).unwrap();
    let result = driver::run(&scenario, Some(&dir.join("out"))).unwrap();
    let l2 = result.l2_error.expect("reference produces an L2 column");
    assert!(l2 > 0.0 && l2 < 0.05, "coarse-vs-fine L2 {l2}");
    assert!(result.energy_error.is_some());

    let csv = std::fs::read_to_string(dir.join("out/metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[8].is_empty(), "l2 column empty");
    assert!(!row[9].is_empty(), "energy column empty");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tmp_dir("sweepfail");
    std::fs::write(
        dir.join("base.toml"),
        r#"
name = "tiny"

[domain]
min = [0.0, 0.0]
max = [1.0, 1.0]

[[pores]]
center = [0.5, 0.5]
radius = 0.2

[mesh]
nx = 8
ny = 8

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = { e = 1.0, nu = 0.3 }

[bc]
clamped = "bottom"
loaded = "top"
traction = [0.0, -0.01]
"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("sweep.toml"),
        r#"
base = "base.toml"
meshes = [[8, 8]]
offsets = [[0.0, 0.0], [5.0, 5.0]]
"#,
    )
    .unwrap();
    // the second offset pushes the pore outside the domain: that row
    // fails validation but the sweep still yields the first row
    let sweep = Sweep::load(&dir.join("sweep.toml")).unwrap();
    let study = driver::condstudy(&sweep, Some(&dir.join("out"))).unwrap();
    assert_eq!(study.rows.len(), 2);
    assert!(study.rows[0].kappa.is_ok());
    assert!(study.rows[1].kappa.is_err());
    assert!(dir.join("out/condstudy.csv").exists());
    assert!(dir.join("out/slopes.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}
