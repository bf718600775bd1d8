//! Effective macro Young's modulus from a pore population, via the
//! incremental effective-medium update for circular voids: inclusions are
//! added one at a time and each step rescales the running modulus.

use crate::error::{Error, Result};
use crate::levelset::Point;

/// Circular pores measured against a reference area.
#[derive(Debug, Clone)]
pub struct PorePopulation {
    pores: Vec<(Point, f64)>,
    /// Reference volume (area in 2D) the porosity fractions refer to.
    reference_area: f64,
}

impl PorePopulation {
    pub fn new(pores: Vec<(Point, f64)>, reference_area: f64) -> Result<Self> {
        if reference_area <= 0.0 {
            return Err(Error::ConfigInconsistency(
                "reference area must be positive".into(),
            ));
        }
        if pores.iter().any(|&(_, r)| r <= 0.0) {
            return Err(Error::ConfigInconsistency("pore radii must be positive".into()));
        }
        let total: f64 = pores.iter().map(|&(_, r)| std::f64::consts::PI * r * r).sum();
        if total >= reference_area {
            return Err(Error::ConfigInconsistency(format!(
                "total pore area {total} exceeds reference area {reference_area}"
            )));
        }
        Ok(PorePopulation {
            pores,
            reference_area,
        })
    }

    pub fn pores(&self) -> &[(Point, f64)] {
        &self.pores
    }

    pub fn reference_area(&self) -> f64 {
        self.reference_area
    }

    pub fn total_porosity(&self) -> f64 {
        self.pores
            .iter()
            .map(|&(_, r)| std::f64::consts::PI * r * r)
            .sum::<f64>()
            / self.reference_area
    }
}

/// How the per-step porosity fraction is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PorosityMode {
    /// Step i uses only pore i's own fraction.
    Incremental,
    /// Step i uses the running void fraction of pores 1..=i.
    Cumulative,
}

/// Parameters of the effective-medium update.
#[derive(Debug, Clone, Copy)]
pub struct MmtParams {
    /// Shape parameter for circular inclusions.
    pub eshelby_l: f64,
    pub mode: PorosityMode,
}

impl Default for MmtParams {
    fn default() -> Self {
        MmtParams {
            eshelby_l: 3.0,
            mode: PorosityMode::Incremental,
        }
    }
}

/// One update step: `(1 - f) E / (f L + (1 - f))`.
pub fn mmt_step(e_prev: f64, porosity: f64, eshelby_l: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&porosity) {
        return Err(Error::PorosityOutOfRange(porosity));
    }
    Ok((1.0 - porosity) * e_prev / (porosity * eshelby_l + (1.0 - porosity)))
}

/// Effective modulus after inserting the whole population, one pore at a
/// time. Returns `e0` for an empty population.
pub fn mmt_effective(e0: f64, pores: &PorePopulation, params: &MmtParams) -> Result<f64> {
    Ok(mmt_trajectory(e0, pores, params)?
        .last()
        .copied()
        .unwrap_or(e0))
}

/// Modulus after each insertion step (empty for an empty population).
pub fn mmt_trajectory(e0: f64, pores: &PorePopulation, params: &MmtParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pores.pores().len());
    let mut e = e0;
    let mut cumulative_area = 0.0;
    for &(_, r) in pores.pores() {
        let area = std::f64::consts::PI * r * r;
        let fraction = match params.mode {
            PorosityMode::Incremental => area / pores.reference_area(),
            PorosityMode::Cumulative => {
                cumulative_area += area;
                cumulative_area / pores.reference_area()
            }
        };
        e = mmt_step(e, fraction, params.eshelby_l)?;
        out.push(e);
    }
    Ok(out)
}
