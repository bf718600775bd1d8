//! Scenario files: TOML descriptions of geometry, mesh, materials,
//! boundary conditions, and outputs for one solver run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{
    BoundaryConditions, Load, Material, MultiscaleConfig, PlaneAssumption, QuadratureDegrees,
    RegularizationMode,
};
use crate::error::{Error, Result};
use crate::homogenize::{mmt_effective, MmtParams, PorePopulation, PorosityMode};
use crate::levelset::LevelSet;
use crate::mesh::{BoundaryTag, Rect};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub domain: DomainSpec,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub pores: Vec<CircleSpec>,
    #[serde(default)]
    pub zooms: Vec<CircleSpec>,
    #[serde(default)]
    pub mixing: MixingSpec,
    #[serde(default)]
    pub stabilization: StabilizationSpec,
    pub materials: MaterialsSpec,
    pub bc: BcSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    /// Directory the scenario was loaded from; resolves relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub refine_levels: usize,
    /// Marking band for refinement; defaults to the mixing half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_band: Option<f64>,
    /// Circles marking the refinement region; defaults to the zooms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_zones: Option<Vec<CircleSpec>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CircleSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixingSpec {
    /// Full transition width `2 * epsilon`.
    pub width: f64,
}

impl Default for MixingSpec {
    fn default() -> Self {
        MixingSpec { width: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizationSpec {
    pub beta: f64,
    pub mode: RegularizationMode,
}

impl Default for StabilizationSpec {
    fn default() -> Self {
        StabilizationSpec {
            beta: 0.005,
            mode: RegularizationMode::CutOnly,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSpec {
    pub micro: MaterialSpec,
    /// Explicit macro material, or "auto" for the effective-medium value.
    pub r#macro: MacroSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rve: Option<RveChoice>,
    #[serde(default = "default_eshelby")]
    pub eshelby_l: f64,
    #[serde(default = "default_porosity_mode")]
    pub porosity_mode: PorosityMode,
    #[serde(default = "default_plane")]
    pub plane: PlaneAssumption,
}

fn default_eshelby() -> f64 {
    3.0
}

fn default_porosity_mode() -> PorosityMode {
    PorosityMode::Incremental
}

fn default_plane() -> PlaneAssumption {
    PlaneAssumption::Strain
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub e: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MacroSpec {
    Keyword(String),
    Explicit(MaterialSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RveChoice {
    WholeDomain,
    InsideZooms,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    pub clamped: BoundaryTag,
    pub loaded: BoundaryTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traction: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub bulk: usize,
    pub transition: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            bulk: 2,
            transition: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    /// Estimate the condition number of the reduced matrix into metrics.
    pub condition: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { condition: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSpec {
    pub fields: String,
    pub metrics: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            fields: "fields.vtk".into(),
            metrics: "metrics.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSpec {
    /// Another scenario file; its solution serves as the error reference.
    pub scenario: String,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut scenario: Scenario = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        scenario.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            path: base_dir.join("<inline>"),
            message: e.to_string(),
        })?;
        scenario.base_dir = base_dir.to_path_buf();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.min[0] < d.max[0] && d.min[1] < d.max[1]) {
            return Err(Error::ConfigInconsistency("degenerate domain rectangle".into()));
        }
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return Err(Error::ZeroCount {
                nx: self.mesh.nx,
                ny: self.mesh.ny,
            });
        }
        if self.mixing.width <= 0.0 {
            return Err(Error::ConfigInconsistency(
                "mixing width must be positive".into(),
            ));
        }
        for p in &self.pores {
            if p.radius <= 0.0 {
                return Err(Error::ConfigInconsistency("pore radius must be positive".into()));
            }
            let inside = p.center[0] - p.radius >= d.min[0]
                && p.center[0] + p.radius <= d.max[0]
                && p.center[1] - p.radius >= d.min[1]
                && p.center[1] + p.radius <= d.max[1];
            if !inside {
                return Err(Error::ConfigInconsistency(format!(
                    "pore at ({}, {}) with radius {} leaves the domain",
                    p.center[0], p.center[1], p.radius
                )));
            }
        }
        for z in &self.zooms {
            if z.radius <= 0.0 {
                return Err(Error::ConfigInconsistency("zoom radius must be positive".into()));
            }
        }
        if matches!(&self.materials.r#macro, MacroSpec::Keyword(k) if k != "auto") {
            return Err(Error::ConfigInconsistency(
                "macro material must be a table {e, nu} or the string \"auto\"".into(),
            ));
        }
        if matches!(&self.materials.r#macro, MacroSpec::Keyword(_)) && self.materials.rve.is_none()
        {
            return Err(Error::ConfigInconsistency(
                "auto macro material requires an rve choice (whole_domain | inside_zooms)".into(),
            ));
        }
        match (self.bc.traction, self.bc.displacement) {
            (Some(_), Some(_)) => {
                return Err(Error::ConfigInconsistency(
                    "specify either traction or displacement, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::ConfigInconsistency(
                    "the loaded edge needs a traction or displacement value".into(),
                ))
            }
            _ => {}
        }
        if self.bc.clamped == self.bc.loaded {
            return Err(Error::ConfigInconsistency(
                "clamped and loaded boundary tags must differ".into(),
            ));
        }
        Ok(())
    }

    pub fn domain_rect(&self) -> Rect {
        Rect::new(self.domain.min, self.domain.max)
    }

    pub fn epsilon(&self) -> f64 {
        0.5 * self.mixing.width
    }

    pub fn pore_levelset(&self) -> LevelSet {
        let circles: Vec<_> = self.pores.iter().map(|c| (c.center, c.radius)).collect();
        LevelSet::pores(&circles)
    }

    /// `None` when no zooms are declared: the micro model then covers the
    /// whole domain (single-scale unfitted run).
    pub fn zoom_levelset(&self) -> Option<LevelSet> {
        if self.zooms.is_empty() {
            None
        } else {
            let circles: Vec<_> = self.zooms.iter().map(|c| (c.center, c.radius)).collect();
            Some(LevelSet::zooms(&circles))
        }
    }

    /// Level set marking the refinement region (`refine_zones` override or
    /// the zooms).
    pub fn refine_levelset(&self) -> Option<LevelSet> {
        let zones = self.refine_zone_circles();
        if zones.is_empty() {
            None
        } else {
            Some(LevelSet::zooms(&zones))
        }
    }

    fn refine_zone_circles(&self) -> Vec<([f64; 2], f64)> {
        match &self.mesh.refine_zones {
            Some(zones) => zones.iter().map(|c| (c.center, c.radius)).collect(),
            None => self.zooms.iter().map(|c| (c.center, c.radius)).collect(),
        }
    }

    pub fn refine_band(&self) -> f64 {
        self.mesh.refine_band.unwrap_or_else(|| self.epsilon())
    }

    /// Effective macro Young's modulus: explicit value, or the
    /// effective-medium estimate over the chosen reference region.
    pub fn resolve_macro_material(&self) -> Result<Material> {
        match &self.materials.r#macro {
            MacroSpec::Explicit(m) => Material::new(m.e, m.nu),
            MacroSpec::Keyword(_) => {
                let rve = self.materials.rve.ok_or_else(|| {
                    Error::ConfigInconsistency("auto macro material requires rve".into())
                })?;
                let population = self.rve_population(rve)?;
                let params = MmtParams {
                    eshelby_l: self.materials.eshelby_l,
                    mode: self.materials.porosity_mode,
                };
                let e = mmt_effective(self.materials.micro.e, &population, &params)?;
                Material::new(e, self.materials.micro.nu)
            }
        }
    }

    /// Pore population for the given reference-region choice.
    pub fn rve_population(&self, rve: RveChoice) -> Result<PorePopulation> {
        match rve {
            RveChoice::WholeDomain => {
                let area = self.domain_rect().area();
                let pores = self.pores.iter().map(|p| (p.center, p.radius)).collect();
                PorePopulation::new(pores, area)
            }
            RveChoice::InsideZooms => {
                if self.zooms.is_empty() {
                    return Err(Error::ConfigInconsistency(
                        "rve = inside_zooms requires at least one zoom".into(),
                    ));
                }
                let area: f64 = self
                    .zooms
                    .iter()
                    .map(|z| std::f64::consts::PI * z.radius * z.radius)
                    .sum();
                let pores = self
                    .pores
                    .iter()
                    .filter(|p| {
                        self.zooms.iter().any(|z| {
                            let dx = p.center[0] - z.center[0];
                            let dy = p.center[1] - z.center[1];
                            (dx * dx + dy * dy).sqrt() <= z.radius
                        })
                    })
                    .map(|p| (p.center, p.radius))
                    .collect();
                PorePopulation::new(pores, area)
            }
        }
    }

    /// Assembly-level configuration with the macro material resolved.
    pub fn multiscale_config(&self) -> Result<MultiscaleConfig> {
        let micro = Material::new(self.materials.micro.e, self.materials.micro.nu)?;
        let macro_mat = self.resolve_macro_material()?;
        let load = match (self.bc.traction, self.bc.displacement) {
            (Some(t), None) => Load::Traction(t),
            (None, Some(u)) => Load::Displacement(u),
            _ => unreachable!("validated"),
        };
        let config = MultiscaleConfig {
            micro,
            macro_mat,
            epsilon: self.epsilon(),
            beta: self.stabilization.beta,
            mode: self.stabilization.mode,
            bc: BoundaryConditions {
                clamped: self.bc.clamped,
                loaded: self.bc.loaded,
                load,
            },
            quadrature: QuadratureDegrees {
                bulk: self.quadrature.bulk,
                transition: self.quadrature.transition,
            },
            plane: self.materials.plane,
        };
        config.validate()?;
        Ok(config)
    }

    /// Serializes the effective (defaulted) scenario for reproducibility.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "test"

[domain]
min = [0.0, 0.0]
max = [12.0, 10.0]

[mesh]
nx = 12
ny = 10

[[pores]]
center = [6.0, 5.0]
radius = 1.0

[[zooms]]
center = [6.0, 5.0]
radius = 2.5

[mixing]
width = 0.1

[materials]
micro = { e = 1.0, nu = 0.3 }
macro = { e = 1.0, nu = 0.3 }

[bc]
clamped = "bottom"
loaded = "top"
displacement = [0.0, -0.1]
"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::from_toml_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(s.name, "test");
        assert_eq!(s.stabilization.beta, 0.005);
        assert_eq!(s.stabilization.mode, RegularizationMode::CutOnly);
        assert_eq!(s.quadrature.bulk, 2);
        assert_eq!(s.epsilon(), 0.05);
        let cfg = s.multiscale_config().unwrap();
        assert_eq!(cfg.macro_mat.e, 1.0);
    }

    #[test]
    fn auto_macro_uses_effective_medium() {
        let text = MINIMAL.replace(
            "macro = { e = 1.0, nu = 0.3 }",
            "macro = \"auto\"\nrve = \"whole_domain\"",
        );
        let s = Scenario::from_toml_str(&text, Path::new(".")).unwrap();
        let cfg = s.multiscale_config().unwrap();
        // one pore of area pi in 120: one incremental step
        let frac = std::f64::consts::PI / 120.0;
        let expected = (1.0 - frac) / (frac * 3.0 + (1.0 - frac));
        assert!((cfg.macro_mat.e - expected).abs() < 1e-14);
        assert_eq!(cfg.macro_mat.nu, 0.3);
    }

    #[test]
    fn auto_macro_without_rve_rejected() {
        let text = MINIMAL.replace("macro = { e = 1.0, nu = 0.3 }", "macro = \"auto\"");
        assert!(matches!(
            Scenario::from_toml_str(&text, Path::new(".")),
            Err(Error::ConfigInconsistency(_))
        ));
    }

    #[test]
    fn pore_outside_domain_rejected() {
        let text = MINIMAL.replace("center = [6.0, 5.0]\nradius = 1.0", "center = [0.1, 5.0]\nradius = 1.0");
        assert!(Scenario::from_toml_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn both_loads_rejected() {
        let text = MINIMAL.replace(
            "displacement = [0.0, -0.1]",
            "displacement = [0.0, -0.1]\ntraction = [0.0, -0.01]",
        );
        assert!(Scenario::from_toml_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn same_tags_rejected() {
        let text = MINIMAL.replace("loaded = \"top\"", "loaded = \"bottom\"");
        assert!(Scenario::from_toml_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::from_toml_str(MINIMAL, Path::new(".")).unwrap();
        let echoed = s.to_toml_string();
        let s2 = Scenario::from_toml_str(&echoed, Path::new(".")).unwrap();
        assert_eq!(s2.name, s.name);
        assert_eq!(s2.mesh.nx, s.mesh.nx);
        assert_eq!(s2.pores.len(), s.pores.len());
        assert_eq!(s2.to_toml_string(), echoed);
    }

    #[test]
    fn inside_zoom_rve_filters_pores() {
        let text = MINIMAL.replace(
            "[[zooms]]\ncenter = [6.0, 5.0]\nradius = 2.5",
            "[[zooms]]\ncenter = [6.0, 5.0]\nradius = 2.5\n\n[[pores]]\ncenter = [1.5, 1.5]\nradius = 0.5",
        );
        let s = Scenario::from_toml_str(&text, Path::new(".")).unwrap();
        let pop = s.rve_population(RveChoice::InsideZooms).unwrap();
        assert_eq!(pop.pores().len(), 1); // the far pore is dropped
        let whole = s.rve_population(RveChoice::WholeDomain).unwrap();
        assert_eq!(whole.pores().len(), 2);
    }
}
