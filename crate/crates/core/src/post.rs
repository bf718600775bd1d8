//! Post-processing: per-cell stress recovery, mixed-stress blending, and
//! deterministic VTK / CSV export.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::assembly::{b_matrix, hooke_voigt, MultiscaleConfig};
use crate::cutgeom::{classify, CellClass, SNAP_REL};
use crate::error::{Error, Result};
use crate::levelset::NodalField;
use crate::mesh::{interp_p1, Mesh2};
use crate::mixing::MixingWeight;

/// Which model owns a cell, judged at its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Micro,
    Transition,
    Macro,
}

impl DomainTag {
    fn as_f64(self) -> f64 {
        match self {
            DomainTag::Micro => 0.0,
            DomainTag::Transition => 1.0,
            DomainTag::Macro => 2.0,
        }
    }
}

/// Cell-constant stresses in Voigt order (xx, yy, xy).
#[derive(Debug, Clone)]
pub struct StressField {
    pub macro_stress: Vec<[f64; 3]>,
    pub micro_stress: Vec<[f64; 3]>,
    pub mixed_stress: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
    pub tag: Vec<DomainTag>,
}

/// Recovers per-cell stresses from the P1 solution. The mixed stress is
/// the micro stress deep in the zoom, the macro stress outside the band,
/// and the centroid-weighted blend in between. Cells fully inside pores
/// and outside the band report zero micro stress (void).
pub fn stresses(
    u: &[f64],
    mesh: &Mesh2,
    phi1: &NodalField,
    phi2: Option<&NodalField>,
    config: &MultiscaleConfig,
) -> StressField {
    assert_eq!(u.len(), 2 * mesh.node_count());
    let d_macro = hooke_voigt(&config.macro_mat, config.plane);
    let d_micro = hooke_voigt(&config.micro, config.plane);
    let weight = MixingWeight::new(config.epsilon);
    let eps = config.epsilon;

    let per_cell: Vec<([f64; 3], [f64; 3], [f64; 3], f64, DomainTag)> = (0..mesh.cell_count())
        .into_par_iter()
        .map(|c| {
            let coords = mesh.cell_coords(c);
            let nodes = mesh.cells()[c];
            let b = b_matrix(coords);
            let mut ue = [0.0; 6];
            for (i, &n) in nodes.iter().enumerate() {
                ue[2 * i] = u[2 * n];
                ue[2 * i + 1] = u[2 * n + 1];
            }
            let mut strain = [0.0; 3];
            for r in 0..3 {
                strain[r] = (0..6).map(|k| b[r][k] * ue[k]).sum();
            }
            let apply = |d: &[[f64; 3]; 3]| {
                let mut s = [0.0; 3];
                for r in 0..3 {
                    s[r] = (0..3).map(|k| d[r][k] * strain[k]).sum();
                }
                s
            };
            let sigma_macro = apply(&d_macro);
            let mut sigma_micro = apply(&d_micro);

            let centroid = mesh.cell_centroid(c);
            let (alpha, tag) = match phi2 {
                Some(f) => {
                    let phi2_c = interp_p1(mesh, f.values(), c, centroid);
                    let a = weight.alpha(phi2_c);
                    let tag = if phi2_c < -eps {
                        DomainTag::Micro
                    } else if phi2_c > eps {
                        DomainTag::Macro
                    } else {
                        DomainTag::Transition
                    };
                    (a, tag)
                }
                None => (0.0, DomainTag::Micro),
            };

            // void cells outside the band carry no micro stress
            let vals = nodes.map(|n| phi1.value(n));
            let tol = SNAP_REL * cell_diameter(coords);
            let in_pore = classify(vals, tol) == CellClass::PositiveSide;
            if in_pore && tag == DomainTag::Micro {
                sigma_micro = [0.0; 3];
            }

            let mixed = match tag {
                DomainTag::Micro => sigma_micro,
                DomainTag::Macro => sigma_macro,
                DomainTag::Transition => {
                    let mut s = [0.0; 3];
                    for k in 0..3 {
                        s[k] = alpha * sigma_macro[k] + (1.0 - alpha) * sigma_micro[k];
                    }
                    s
                }
            };
            (sigma_macro, sigma_micro, mixed, alpha, tag)
        })
        .collect();

    let mut out = StressField {
        macro_stress: Vec::with_capacity(per_cell.len()),
        micro_stress: Vec::with_capacity(per_cell.len()),
        mixed_stress: Vec::with_capacity(per_cell.len()),
        alpha: Vec::with_capacity(per_cell.len()),
        tag: Vec::with_capacity(per_cell.len()),
    };
    for (sm, sm2, smix, a, t) in per_cell {
        out.macro_stress.push(sm);
        out.micro_stress.push(sm2);
        out.mixed_stress.push(smix);
        out.alpha.push(a);
        out.tag.push(t);
    }
    out
}

fn cell_diameter(tri: [[f64; 2]; 3]) -> f64 {
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(tri[0], tri[1]).max(d(tri[1], tri[2])).max(d(tri[2], tri[0]))
}

/// Full-precision float formatting (17 significant digits round-trips f64).
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes displacement and stress fields as a legacy ASCII VTK
/// unstructured grid. Output is byte-deterministic for identical inputs.
pub fn export_vtk(
    path: &Path,
    mesh: &Mesh2,
    displacement: &[f64],
    field: &StressField,
) -> Result<()> {
    assert_eq!(displacement.len(), 2 * mesh.node_count());
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("cutmix fields\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");

    let n = mesh.node_count();
    let m = mesh.cell_count();
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.nodes() {
        let _ = writeln!(s, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1]));
    }
    let _ = writeln!(s, "CELLS {m} {}", 4 * m);
    for tri in mesh.cells() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        s.push_str("5\n");
    }

    let _ = writeln!(s, "POINT_DATA {n}");
    s.push_str("VECTORS displacement double\n");
    for i in 0..n {
        let _ = writeln!(
            s,
            "{} {} 0",
            fmt_f64(displacement[2 * i]),
            fmt_f64(displacement[2 * i + 1])
        );
    }

    let _ = writeln!(s, "CELL_DATA {m}");
    for (name, values) in [
        ("sigma_yy", field.mixed_stress.iter().map(|s| s[1]).collect::<Vec<_>>()),
        ("alpha", field.alpha.clone()),
        ("domain", field.tag.iter().map(|t| t.as_f64()).collect::<Vec<_>>()),
    ] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for v in values {
            let _ = writeln!(s, "{}", fmt_f64(v));
        }
    }
    s.push_str("TENSORS sigma_mix double\n");
    for sig in &field.mixed_stress {
        let _ = writeln!(s, "{} {} 0", fmt_f64(sig[0]), fmt_f64(sig[2]));
        let _ = writeln!(s, "{} {} 0", fmt_f64(sig[2]), fmt_f64(sig[1]));
        s.push_str("0 0 0\n");
    }

    write_atomic(path, s.as_bytes())
}

/// One metrics row per run.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub h_min: f64,
    pub h_max: f64,
    pub two_epsilon: f64,
    pub beta: f64,
    pub mode: String,
    pub dofs: usize,
    pub kappa: Option<f64>,
    pub iterations: usize,
    pub l2_error: Option<f64>,
    pub energy_error: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "h_min,h_max,two_epsilon,beta,mode,dofs,kappa,iterations,l2_error,energy_error";

impl MetricsRow {
    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(self.h_min),
            fmt_f64(self.h_max),
            fmt_f64(self.two_epsilon),
            fmt_f64(self.beta),
            self.mode,
            self.dofs,
            opt(self.kappa),
            self.iterations,
            opt(self.l2_error),
            opt(self.energy_error),
        )
    }
}

/// Writes metrics rows sorted by `h_min` descending (coarse to fine)
/// within the given order of appearance of equal `h_min`.
pub fn export_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.h_min.partial_cmp(&a.h_min).unwrap_or(std::cmp::Ordering::Equal));
    let mut s = String::new();
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for row in sorted {
        s.push_str(&row.to_csv());
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        BoundaryConditions, Load, Material, MultiscaleConfig, PlaneAssumption, QuadratureDegrees,
        RegularizationMode,
    };
    use crate::levelset::LevelSet;
    use crate::mesh::{BoundaryTag, Rect};

    fn config() -> MultiscaleConfig {
        MultiscaleConfig {
            micro: Material::new(1.0, 0.0).unwrap(),
            macro_mat: Material::new(1.0, 0.0).unwrap(),
            epsilon: 0.5,
            beta: 0.005,
            mode: RegularizationMode::CutOnly,
            bc: BoundaryConditions {
                clamped: BoundaryTag::Bottom,
                loaded: BoundaryTag::Top,
                load: Load::Traction([0.0, -0.01]),
            },
            quadrature: QuadratureDegrees::default(),
            plane: PlaneAssumption::Strain,
        }
    }

    #[test]
    fn uniform_compression_recovers_traction() {
        // affine field u_y = -q y on a homogeneous plate with E=1, nu=0
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [2.0, 1.0]), 4, 2).unwrap();
        let phi1 = LevelSet::pores(&[]).project_p1(&mesh);
        let q = 0.01;
        let mut u = vec![0.0; 2 * mesh.node_count()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            u[2 * i + 1] = -q * p[1];
        }
        let field = stresses(&u, &mesh, &phi1, None, &config());
        for c in 0..mesh.cell_count() {
            assert!((field.mixed_stress[c][1] - (-q)).abs() < 1e-10 * q);
        }
    }

    #[test]
    fn blend_matches_equal_materials() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [12.0, 10.0]), 24, 20).unwrap();
        let phi1 = LevelSet::pores(&[]).project_p1(&mesh);
        let phi2 = LevelSet::zooms(&[([6.0, 5.0], 2.0)]).project_p1(&mesh);
        let mut u = vec![0.0; 2 * mesh.node_count()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            u[2 * i] = 0.01 * p[0];
            u[2 * i + 1] = -0.02 * p[1];
        }
        let field = stresses(&u, &mesh, &phi1, Some(&phi2), &config());
        for c in 0..mesh.cell_count() {
            for k in 0..3 {
                assert!((field.mixed_stress[c][k] - field.macro_stress[c][k]).abs() < 1e-14);
                assert!((field.mixed_stress[c][k] - field.micro_stress[c][k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blend_uses_centroid_alpha_for_distinct_materials() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [12.0, 10.0]), 24, 20).unwrap();
        let phi1 = LevelSet::pores(&[]).project_p1(&mesh);
        let phi2 = LevelSet::zooms(&[([6.0, 5.0], 2.0)]).project_p1(&mesh);
        let mut cfg = config();
        cfg.macro_mat = Material::new(0.78, 0.3).unwrap();
        cfg.micro = Material::new(1.0, 0.3).unwrap();
        let mut u = vec![0.0; 2 * mesh.node_count()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            u[2 * i] = 0.01 * p[0] + 0.005 * p[1];
            u[2 * i + 1] = -0.02 * p[1];
        }
        let field = stresses(&u, &mesh, &phi1, Some(&phi2), &cfg);
        for c in 0..mesh.cell_count() {
            if field.tag[c] == DomainTag::Transition {
                let a = field.alpha[c];
                for k in 0..3 {
                    let expected = a * field.macro_stress[c][k] + (1.0 - a) * field.micro_stress[c][k];
                    assert!((field.mixed_stress[c][k] - expected).abs() < 1e-14);
                }
            }
        }
        // blend stays inside the componentwise envelope
        for c in 0..mesh.cell_count() {
            if field.tag[c] == DomainTag::Transition {
                for k in 0..3 {
                    let lo = field.macro_stress[c][k].min(field.micro_stress[c][k]) - 1e-12;
                    let hi = field.macro_stress[c][k].max(field.micro_stress[c][k]) + 1e-12;
                    assert!(field.mixed_stress[c][k] >= lo && field.mixed_stress[c][k] <= hi);
                }
            }
        }
    }

    #[test]
    fn void_cells_report_zero_micro_stress() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [12.0, 10.0]), 48, 40).unwrap();
        let phi1 = LevelSet::pores(&[([6.0, 5.0], 0.9)]).project_p1(&mesh);
        let phi2 = LevelSet::zooms(&[([6.0, 5.0], 3.0)]).project_p1(&mesh);
        let mut u = vec![0.0; 2 * mesh.node_count()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            u[2 * i + 1] = -0.01 * p[1];
        }
        let field = stresses(&u, &mesh, &phi1, Some(&phi2), &config());
        let mut found_void = false;
        for c in 0..mesh.cell_count() {
            let coords = mesh.cell_coords(c);
            let centroid = mesh.cell_centroid(c);
            let fully_inside = coords.iter().chain([&centroid]).all(|p| {
                ((p[0] - 6.0).powi(2) + (p[1] - 5.0).powi(2)).sqrt() < 0.85
            });
            if fully_inside {
                found_void = true;
                assert_eq!(field.micro_stress[c], [0.0; 3]);
                assert_eq!(field.mixed_stress[c], [0.0; 3]);
            }
        }
        assert!(found_void);
    }

    #[test]
    fn vtk_round_trip_full_precision() {
        let dir = std::env::temp_dir().join("cutmix_vtk_test");
        let path = dir.join("out.vtk");
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [1.0, 1.0]), 1, 1).unwrap();
        let phi1 = LevelSet::pores(&[]).project_p1(&mesh);
        let mut u = vec![0.0; 2 * mesh.node_count()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            u[2 * i] = 0.123456789012345_f64 * p[0];
            u[2 * i + 1] = -0.987654321098765_f64 * p[1] / 3.0;
        }
        let field = stresses(&u, &mesh, &phi1, None, &config());
        export_vtk(&path, &mesh, &u, &field).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("CELLS 2 8"));

        // points parse back bitwise
        let lines: Vec<&str> = text.lines().collect();
        let points_at = lines.iter().position(|l| l.starts_with("POINTS")).unwrap();
        for (i, p) in mesh.nodes().iter().enumerate() {
            let parts: Vec<f64> = lines[points_at + 1 + i]
                .split_whitespace()
                .map(|t| t.parse().unwrap())
                .collect();
            assert_eq!(parts[0], p[0]);
            assert_eq!(parts[1], p[1]);
        }
        // sigma_yy parses back bitwise
        let syy_at = lines.iter().position(|l| l.starts_with("SCALARS sigma_yy")).unwrap();
        for c in 0..mesh.cell_count() {
            let v: f64 = lines[syy_at + 2 + c].parse().unwrap();
            assert_eq!(v, field.mixed_stress[c][1]);
        }

        // determinism: rewrite produces identical bytes
        let bytes1 = std::fs::read(&path).unwrap();
        export_vtk(&path, &mesh, &u, &field).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn metrics_sorted_by_h_descending() {
        let dir = std::env::temp_dir().join("cutmix_csv_test");
        let path = dir.join("metrics.csv");
        let mk = |h: f64| MetricsRow {
            h_min: h,
            h_max: h,
            two_epsilon: 0.1,
            beta: 0.005,
            mode: "cut_only".into(),
            dofs: 100,
            kappa: Some(12.5),
            iterations: 0,
            l2_error: None,
            energy_error: None,
        };
        export_metrics(&path, &[mk(0.25), mk(1.0), mk(0.125), mk(0.5)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        let hs: Vec<f64> = lines
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(hs, vec![1.0, 0.5, 0.25, 0.125]);
        // kappa column parses as a positive float
        for line in text.lines().skip(1) {
            let kappa: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
            assert!(kappa > 0.0);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
