//! End-to-end pipelines behind the CLI subcommands: single runs,
//! condition-number sweeps, homogenization reports, and geometry checks.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, AssembledSystem, RegularizationMode};
use crate::cutgeom::{classify, CellClass, CutDecomposition, SNAP_REL};
use crate::error::{Error, Result};
use crate::homogenize::{mmt_trajectory, MmtParams};
use crate::levelset::{LevelSet, NodalField};
use crate::mesh::{interp_p1, CellLocator, Mesh2};
use crate::post::{export_metrics, export_vtk, stresses, MetricsRow, StressField};
use crate::scenario::{RveChoice, Scenario};
use crate::solve::{cond_estimate, solve_spd, SolveReport};

/// Everything a single run produces, kept in memory for tests and for
/// reference-error computation.
pub struct RunResult {
    pub mesh: Mesh2,
    pub phi1: NodalField,
    pub phi2: Option<NodalField>,
    pub system: AssembledSystem,
    pub displacement: Vec<f64>,
    pub stress: StressField,
    pub report: SolveReport,
    pub kappa: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    /// Strain energy `u^T K u / 2` of the full assembled system.
    pub energy: f64,
    pub l2_error: Option<f64>,
    pub energy_error: Option<f64>,
}

/// Builds the background mesh for a scenario: structured grid plus
/// red-green refinement around the refinement zones.
pub fn build_mesh(scenario: &Scenario) -> Result<Mesh2> {
    let mesh = Mesh2::generate_rect(scenario.domain_rect(), scenario.mesh.nx, scenario.mesh.ny)?;
    if scenario.mesh.refine_levels == 0 {
        return Ok(mesh);
    }
    match scenario.refine_levelset() {
        Some(ls) => {
            let marked = mesh.mark_near(&ls, scenario.refine_band());
            Ok(mesh.refine(&marked, scenario.mesh.refine_levels))
        }
        None => Ok(mesh),
    }
}

/// Executes project -> mesh -> assemble -> solve -> post for one scenario.
/// Artifacts are written only when `out_dir` is given.
pub fn run(scenario: &Scenario, out_dir: Option<&Path>) -> Result<RunResult> {
    let mut result = run_without_reference(scenario)?;

    if let Some(reference) = &scenario.reference {
        let ref_path = scenario.base_dir.join(&reference.scenario);
        let mut ref_scenario = Scenario::load(&ref_path)?;
        ref_scenario.reference = None; // one level of reference only
        let ref_result = run_without_reference(&ref_scenario)?;
        let l2 = displacement_l2_difference(&result, &ref_result, |_p| true)?;
        result.l2_error = Some(l2);
        let ref_energy = ref_result.energy;
        if ref_energy > 0.0 {
            result.energy_error = Some((result.energy - ref_energy).abs() / ref_energy);
        }
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        export_vtk(
            &dir.join(&scenario.output.fields),
            &result.mesh,
            &result.displacement,
            &result.stress,
        )?;
        export_metrics(&dir.join(&scenario.output.metrics), &[metrics_row(scenario, &result)])?;
        let echo = scenario.to_toml_string();
        let echo_path = dir.join("scenario.toml");
        std::fs::write(&echo_path, echo).map_err(|e| Error::io(&echo_path, e))?;
    }
    Ok(result)
}

fn run_without_reference(scenario: &Scenario) -> Result<RunResult> {
    let mesh = build_mesh(scenario)?;
    let pore_ls = scenario.pore_levelset();
    let phi1 = pore_ls.project_p1(&mesh);
    let phi2 = scenario.zoom_levelset().map(|ls| ls.project_p1(&mesh));
    let config = scenario.multiscale_config()?;

    let system = assemble(&mesh, &phi1, phi2.as_ref(), &config)?;
    let (reduced, keep) = system.reduced();
    if reduced.matrix.dim() == 0 {
        return Err(Error::SingularSystem("no free active DOFs".into()));
    }
    let report = solve_spd(&reduced)?;
    let displacement = system.expand(&report.solution, &keep);

    let kappa = if scenario.solver.condition {
        Some(cond_estimate(&reduced.matrix)?)
    } else {
        None
    };

    let stress = stresses(&displacement, &mesh, &phi1, phi2.as_ref(), &config);
    let (h_min, h_max) = mesh.h_min_max();

    let mut ku = vec![0.0; system.n_dofs];
    system.matrix.matvec(&displacement, &mut ku);
    let energy = 0.5
        * displacement
            .iter()
            .zip(&ku)
            .map(|(u, k)| u * k)
            .sum::<f64>();

    Ok(RunResult {
        mesh,
        phi1,
        phi2,
        system,
        displacement,
        stress,
        report,
        kappa,
        h_min,
        h_max,
        energy,
        l2_error: None,
        energy_error: None,
    })
}

fn metrics_row(scenario: &Scenario, result: &RunResult) -> MetricsRow {
    MetricsRow {
        h_min: result.h_min,
        h_max: result.h_max,
        two_epsilon: scenario.mixing.width,
        beta: scenario.stabilization.beta,
        mode: mode_name(scenario.stabilization.mode).into(),
        dofs: result.system.free_dofs().len(),
        kappa: result.kappa,
        iterations: result.report.iterations,
        l2_error: result.l2_error,
        energy_error: result.energy_error,
    }
}

pub fn mode_name(mode: RegularizationMode) -> &'static str {
    match mode {
        RegularizationMode::CutOnly => "cut_only",
        RegularizationMode::CutPlusTransitionPores => "cut_plus_transition_pores",
        RegularizationMode::AllPoreElements => "all_pore_elements",
    }
}

/// Relative L2 difference of the vertical displacement between two runs,
/// sampled on a fixed lattice restricted by `filter` and to points that
/// carry material (outside pores) in both runs.
pub fn displacement_l2_difference(
    a: &RunResult,
    b: &RunResult,
    filter: impl Fn([f64; 2]) -> bool,
) -> Result<f64> {
    let dom = a.mesh.domain();
    let loc_a = CellLocator::new(&a.mesh);
    let loc_b = CellLocator::new(&b.mesh);
    let uy_a: Vec<f64> = (0..a.mesh.node_count()).map(|i| a.displacement[2 * i + 1]).collect();
    let uy_b: Vec<f64> = (0..b.mesh.node_count()).map(|i| b.displacement[2 * i + 1]).collect();
    let n = 160;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut samples = 0usize;
    for j in 0..=n {
        for i in 0..=n {
            let p = [
                dom.min[0] + (dom.max[0] - dom.min[0]) * i as f64 / n as f64,
                dom.min[1] + (dom.max[1] - dom.min[1]) * j as f64 / n as f64,
            ];
            if !filter(p) {
                continue;
            }
            let (Some(ca), Some(cb)) = (loc_a.locate(p), loc_b.locate(p)) else {
                continue;
            };
            // compare material points only: fictitious values inside pores
            // are extension artifacts in both runs
            let in_pore_a = interp_p1(&a.mesh, a.phi1.values(), ca, p) > 0.0;
            let in_pore_b = interp_p1(&b.mesh, b.phi1.values(), cb, p) > 0.0;
            if in_pore_a || in_pore_b {
                continue;
            }
            let ua = interp_p1(&a.mesh, &uy_a, ca, p);
            let ub = interp_p1(&b.mesh, &uy_b, cb, p);
            num += (ua - ub) * (ua - ub);
            den += ub * ub;
            samples += 1;
        }
    }
    if samples == 0 || den == 0.0 {
        return Err(Error::ConfigInconsistency(
            "no comparable sample points for the error norm".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// One condition-number sweep combination.
#[derive(Debug, Clone)]
pub struct CondRow {
    pub nx: usize,
    pub ny: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub two_epsilon: f64,
    pub beta: f64,
    pub mode: RegularizationMode,
    pub offset: [f64; 2],
    pub dofs: usize,
    /// Condition estimate, or the failure message for this combination.
    pub kappa: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct SeriesSlope {
    pub two_epsilon: f64,
    pub beta: f64,
    pub mode: RegularizationMode,
    pub offset: [f64; 2],
    /// Exponent `p` in `kappa ~ h^-p`, from a least-squares log-log fit.
    pub exponent: f64,
}

#[derive(Debug)]
pub struct CondStudy {
    pub rows: Vec<CondRow>,
    pub slopes: Vec<SeriesSlope>,
}

/// Sweep description: a base scenario crossed with mesh sizes, mixing
/// widths, penalty parameters, modes, and pore-center offsets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub base: String,
    pub meshes: Vec<[usize; 2]>,
    #[serde(default)]
    pub widths: Option<Vec<f64>>,
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default)]
    pub modes: Option<Vec<RegularizationMode>>,
    #[serde(default)]
    pub offsets: Option<Vec<[f64; 2]>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Sweep {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sweep: Sweep = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        sweep.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        if sweep.meshes.is_empty() {
            return Err(Error::ConfigInconsistency("sweep lists no meshes".into()));
        }
        Ok(sweep)
    }

    pub fn base_scenario(&self) -> Result<Scenario> {
        Scenario::load(&self.base_dir.join(&self.base))
    }
}

/// Runs assembly and condition estimation over every sweep combination.
/// Per-combination failures are recorded in the row; the sweep continues.
pub fn condstudy(sweep: &Sweep, out_dir: Option<&Path>) -> Result<CondStudy> {
    let base = sweep.base_scenario()?;
    let widths = sweep
        .widths
        .clone()
        .unwrap_or_else(|| vec![base.mixing.width]);
    let betas = sweep
        .betas
        .clone()
        .unwrap_or_else(|| vec![base.stabilization.beta]);
    let modes = sweep
        .modes
        .clone()
        .unwrap_or_else(|| vec![base.stabilization.mode]);
    let offsets = sweep.offsets.clone().unwrap_or_else(|| vec![[0.0, 0.0]]);

    let mut rows = Vec::new();
    for &width in &widths {
        for &beta in &betas {
            for &mode in &modes {
                for &offset in &offsets {
                    for &[nx, ny] in &sweep.meshes {
                        let mut s = base.clone();
                        s.mesh.nx = nx;
                        s.mesh.ny = ny;
                        s.mixing.width = width;
                        s.stabilization.beta = beta;
                        s.stabilization.mode = mode;
                        for p in &mut s.pores {
                            p.center[0] += offset[0];
                            p.center[1] += offset[1];
                        }
                        rows.push(cond_row(&s, offset));
                    }
                }
            }
        }
    }

    let slopes = fit_slopes(&rows);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metric_rows: Vec<MetricsRow> = rows
            .iter()
            .filter_map(|r| {
                r.kappa.as_ref().ok().map(|&k| MetricsRow {
                    h_min: r.h_min,
                    h_max: r.h_max,
                    two_epsilon: r.two_epsilon,
                    beta: r.beta,
                    mode: mode_name(r.mode).into(),
                    dofs: r.dofs,
                    kappa: Some(k),
                    iterations: 0,
                    l2_error: None,
                    energy_error: None,
                })
            })
            .collect();
        export_metrics(&dir.join("condstudy.csv"), &metric_rows)?;

        let mut slope_csv = String::from("two_epsilon,beta,mode,offset_x,offset_y,exponent\n");
        for s in &slopes {
            slope_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.two_epsilon,
                s.beta,
                mode_name(s.mode),
                s.offset[0],
                s.offset[1],
                s.exponent
            ));
        }
        let slope_path = dir.join("slopes.csv");
        std::fs::write(&slope_path, slope_csv).map_err(|e| Error::io(&slope_path, e))?;
    }

    Ok(CondStudy { rows, slopes })
}

fn cond_row(scenario: &Scenario, offset: [f64; 2]) -> CondRow {
    let outcome = (|| -> Result<(f64, f64, f64, usize)> {
        scenario.validate()?;
        let mesh = build_mesh(scenario)?;
        let phi1 = scenario.pore_levelset().project_p1(&mesh);
        let phi2 = scenario.zoom_levelset().map(|ls| ls.project_p1(&mesh));
        let config = scenario.multiscale_config()?;
        let system = assemble(&mesh, &phi1, phi2.as_ref(), &config)?;
        let (reduced, _) = system.reduced();
        let kappa = cond_estimate(&reduced.matrix)?;
        let (h_min, h_max) = mesh.h_min_max();
        Ok((kappa, h_min, h_max, reduced.matrix.dim()))
    })();

    let (kappa, h_min, h_max, dofs) = match outcome {
        Ok((k, h_min, h_max, dofs)) => (Ok(k), h_min, h_max, dofs),
        Err(e) => (Err(e.to_string()), f64::NAN, f64::NAN, 0),
    };
    CondRow {
        nx: scenario.mesh.nx,
        ny: scenario.mesh.ny,
        h_min,
        h_max,
        two_epsilon: scenario.mixing.width,
        beta: scenario.stabilization.beta,
        mode: scenario.stabilization.mode,
        offset,
        dofs,
        kappa,
    }
}

fn fit_slopes(rows: &[CondRow]) -> Vec<SeriesSlope> {
    let mut series: Vec<(f64, f64, RegularizationMode, [f64; 2])> = Vec::new();
    for r in rows {
        let key = (r.two_epsilon, r.beta, r.mode, r.offset);
        if !series.contains(&key) {
            series.push(key);
        }
    }
    series
        .into_iter()
        .filter_map(|key| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| (r.two_epsilon, r.beta, r.mode, r.offset) == key)
                .filter_map(|r| r.kappa.as_ref().ok().map(|&k| (r.h_min.ln(), k.ln())))
                .collect();
            if pts.len() < 2 {
                return None;
            }
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            Some(SeriesSlope {
                two_epsilon: key.0,
                beta: key.1,
                mode: key.2,
                offset: key.3,
                exponent: -slope,
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct HomogenizeReport {
    pub e0: f64,
    pub effective: f64,
    pub total_porosity: f64,
    pub trajectory: Vec<f64>,
    pub rve: RveChoice,
}

/// Effective-modulus report for the scenario's pore population.
pub fn homogenize_report(scenario: &Scenario) -> Result<HomogenizeReport> {
    let rve = scenario.materials.rve.unwrap_or(RveChoice::WholeDomain);
    let population = scenario.rve_population(rve)?;
    let params = MmtParams {
        eshelby_l: scenario.materials.eshelby_l,
        mode: scenario.materials.porosity_mode,
    };
    let e0 = scenario.materials.micro.e;
    let trajectory = mmt_trajectory(e0, &population, &params)?;
    let effective = trajectory.last().copied().unwrap_or(e0);
    Ok(HomogenizeReport {
        e0,
        effective,
        total_porosity: population.total_porosity(),
        trajectory,
        rve,
    })
}

#[derive(Debug)]
pub struct GeometryReport {
    pub matrix_area: f64,
    pub pore_area: f64,
    pub interface_length: f64,
    pub analytic_matrix_area: f64,
    pub analytic_pore_area: f64,
    pub analytic_interface_length: f64,
    /// Monte-Carlo pore-area estimate and its standard error.
    pub mc_pore_area: f64,
    pub mc_standard_error: f64,
    pub warnings: Vec<String>,
}

/// Geometry validation: discrete measures against analytic circle values,
/// with a seeded Monte-Carlo cross-check and per-pore resolution warnings.
pub fn validate(scenario: &Scenario, seed: u64) -> Result<GeometryReport> {
    let mesh = build_mesh(scenario)?;
    let pore_ls = scenario.pore_levelset();
    let phi1 = pore_ls.project_p1(&mesh);
    let decomp = CutDecomposition::build(&mesh, &phi1)?;
    let (matrix_area, pore_area, interface_length) = decomp.measures(&mesh);

    let analytic_pore_area: f64 = scenario
        .pores
        .iter()
        .map(|p| std::f64::consts::PI * p.radius * p.radius)
        .sum();
    let domain_area = scenario.domain_rect().area();
    let analytic_interface_length: f64 = scenario
        .pores
        .iter()
        .map(|p| 2.0 * std::f64::consts::PI * p.radius)
        .sum();

    // seeded Monte-Carlo estimate of the pore area
    let n_samples = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = scenario.domain_rect();
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let p = [
            rng.gen_range(dom.min[0]..dom.max[0]),
            rng.gen_range(dom.min[1]..dom.max[1]),
        ];
        if pore_ls.eval(p) > 0.0 {
            hits += 1;
        }
    }
    let frac = hits as f64 / n_samples as f64;
    let mc_pore_area = frac * domain_area;
    let mc_standard_error = domain_area * (frac * (1.0 - frac) / n_samples as f64).sqrt();

    // resolution warnings: per-pore cut-cell lists
    let mut warnings = Vec::new();
    let mut cut_by: Vec<Vec<usize>> = vec![Vec::new(); mesh.cell_count()];
    for (pi, pore) in scenario.pores.iter().enumerate() {
        let single = LevelSet::pores(&[(pore.center, pore.radius)]);
        let nodal = single.project_p1(&mesh);
        let mut any_cut = false;
        for c in 0..mesh.cell_count() {
            let vals = mesh.cells()[c].map(|n| nodal.value(n));
            let tol = SNAP_REL * cell_diam(&mesh, c);
            if classify(vals, tol) == CellClass::Cut {
                cut_by[c].push(pi);
                any_cut = true;
            }
        }
        if !any_cut {
            warnings.push(format!(
                "pore {pi} at ({}, {}) r={} is smaller than the local mesh and leaves no discrete interface",
                pore.center[0], pore.center[1], pore.radius
            ));
        }
    }
    for (c, list) in cut_by.iter().enumerate() {
        if list.len() > 1 {
            warnings.push(format!(
                "cell {c} is cut by {} pore interfaces; the nodal projection cannot represent sub-cell geometry",
                list.len()
            ));
        }
    }

    Ok(GeometryReport {
        matrix_area,
        pore_area,
        interface_length,
        analytic_matrix_area: domain_area - analytic_pore_area,
        analytic_pore_area,
        analytic_interface_length,
        mc_pore_area,
        mc_standard_error,
        warnings,
    })
}

fn cell_diam(mesh: &Mesh2, c: usize) -> f64 {
    let tri = mesh.cell_coords(c);
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(tri[0], tri[1]).max(d(tri[1], tri[2])).max(d(tri[2], tri[0]))
}
