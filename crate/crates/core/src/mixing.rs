//! Smooth macro/micro mixing weight over the transition band around the
//! zoom boundary.
//!
//! The macro weight is 0 deep inside the zoom, 1 outside the band, and a
//! sine ramp in between; the micro weight is its complement.

use crate::levelset::NodalField;
use crate::mesh::{CellSet, Mesh2};

/// Sine-profile mixing weight with band half-width `epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct MixingWeight {
    epsilon: f64,
}

impl MixingWeight {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "band half-width must be positive");
        MixingWeight { epsilon }
    }

    /// Half-width of the transition band.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Macro weight at signed distance `phi2` from the zoom boundary:
    /// 0 for `phi2 <= -eps`, 1 for `phi2 >= eps`, and
    /// `(1 + sin(pi/(2 eps) * phi2)) / 2` inside the band.
    pub fn alpha(&self, phi2: f64) -> f64 {
        let e = self.epsilon;
        if phi2 <= -e {
            0.0
        } else if phi2 >= e {
            1.0
        } else {
            0.5 * (1.0 + (std::f64::consts::FRAC_PI_2 * phi2 / e).sin())
        }
    }

    /// Complementary micro weight.
    pub fn alpha_micro(&self, phi2: f64) -> f64 {
        1.0 - self.alpha(phi2)
    }
}

/// Cells whose nodal range of `phi2` intersects the band `[-eps, eps]`.
pub fn transition_cells(mesh: &Mesh2, phi2: &NodalField, epsilon: f64) -> CellSet {
    assert!(epsilon > 0.0);
    let mut set = CellSet::new();
    for (c, tri) in mesh.cells().iter().enumerate() {
        let vals = tri.map(|n| phi2.value(n));
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min <= epsilon && max >= -epsilon {
            set.insert(c);
        }
    }
    set
}
