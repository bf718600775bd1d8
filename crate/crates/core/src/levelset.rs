//! Implicit geometry as composable signed-distance fields.
//!
//! Pore boundaries and zoom boundaries are both described by level set
//! functions: the zero isoline is the interface, the sign tells the two
//! regions apart. Primitives are exact signed distance functions; CSG
//! nodes combine children by pointwise max/min, which keeps the zero set
//! exact away from intersections of child boundaries.

use crate::error::{Error, Result};
use crate::mesh::Mesh2;

pub type Point = [f64; 2];

/// Gradient norm below which `unit_normal` reports a degenerate point.
const GRAD_EPS: f64 = 1e-12;

/// One node of the CSG expression tree.
///
/// Sign conventions of the primitives:
/// * `Circle` is positive inside the disc (`r - |x - c|`).
/// * `HalfPlane` is positive on the side its `normal` points to.
/// * `Rect` is positive inside the box.
#[derive(Debug, Clone)]
pub enum Shape {
    Circle { center: Point, radius: f64 },
    HalfPlane { point: Point, normal: Point },
    Rect { min: Point, max: Point },
    /// Pointwise max of the children.
    Union(Vec<Shape>),
    /// Pointwise min of the children.
    Intersection(Vec<Shape>),
    /// Pointwise negation.
    Complement(Box<Shape>),
}

/// Which side of the described region carries positive values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// Field as built from the primitives (positive inside the region).
    PositiveInside,
    /// Field negated, so the region interior is negative.
    PositiveOutside,
}

/// A signed-distance field over the whole plane.
#[derive(Debug, Clone)]
pub struct LevelSet {
    root: Shape,
    convention: SignConvention,
}

impl LevelSet {
    pub fn new(root: Shape, convention: SignConvention) -> Self {
        LevelSet { root, convention }
    }

    /// Pore field: positive inside the pores, negative in the matrix.
    pub fn pores(circles: &[(Point, f64)]) -> Self {
        let children = circles
            .iter()
            .map(|&(center, radius)| Shape::Circle { center, radius })
            .collect();
        LevelSet::new(Shape::Union(children), SignConvention::PositiveInside)
    }

    /// Zoom field: negative inside the zoom discs, positive outside.
    pub fn zooms(circles: &[(Point, f64)]) -> Self {
        let children = circles
            .iter()
            .map(|&(center, radius)| Shape::Circle { center, radius })
            .collect();
        LevelSet::new(Shape::Union(children), SignConvention::PositiveOutside)
    }

    /// Field value at `p`. Exact signed distance for single primitives;
    /// min/max combination at CSG nodes.
    pub fn eval(&self, p: Point) -> f64 {
        let v = eval_shape(&self.root, p);
        match self.convention {
            SignConvention::PositiveInside => v,
            SignConvention::PositiveOutside => -v,
        }
    }

    /// Analytic gradient of the field at `p`. At CSG nodes the gradient of
    /// the active child is selected; ties go to the first child.
    pub fn gradient(&self, p: Point) -> Point {
        let (_, g) = eval_grad(&self.root, p);
        match self.convention {
            SignConvention::PositiveInside => g,
            SignConvention::PositiveOutside => [-g[0], -g[1]],
        }
    }

    /// Normalized gradient, pointing from the negative to the positive region.
    pub fn unit_normal(&self, p: Point) -> Result<Point> {
        let g = self.gradient(p);
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if norm < GRAD_EPS {
            return Err(Error::DegenerateGradient {
                x: p[0],
                y: p[1],
                norm,
            });
        }
        Ok([g[0] / norm, g[1] / norm])
    }

    /// Nodal interpolant: one field value per mesh node. The zero isoline
    /// of the resulting P1 interpolant is the discrete interface.
    pub fn project_p1(&self, mesh: &Mesh2) -> NodalField {
        let values = mesh.nodes().iter().map(|&p| self.eval(p)).collect();
        NodalField { values }
    }
}

fn eval_shape(shape: &Shape, p: Point) -> f64 {
    match shape {
        Shape::Circle { center, radius } => {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            radius - (dx * dx + dy * dy).sqrt()
        }
        Shape::HalfPlane { point, normal } => {
            let n = normalize(*normal);
            (p[0] - point[0]) * n[0] + (p[1] - point[1]) * n[1]
        }
        Shape::Rect { min, max } => rect_inside_distance(p, *min, *max),
        Shape::Union(children) => children
            .iter()
            .map(|c| eval_shape(c, p))
            .fold(f64::NEG_INFINITY, f64::max),
        Shape::Intersection(children) => children
            .iter()
            .map(|c| eval_shape(c, p))
            .fold(f64::INFINITY, f64::min),
        Shape::Complement(child) => -eval_shape(child, p),
    }
}

fn eval_grad(shape: &Shape, p: Point) -> (f64, Point) {
    match shape {
        Shape::Circle { center, radius } => {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            let d = (dx * dx + dy * dy).sqrt();
            if d == 0.0 {
                (*radius, [0.0, 0.0])
            } else {
                (radius - d, [-dx / d, -dy / d])
            }
        }
        Shape::HalfPlane { point, normal } => {
            let n = normalize(*normal);
            let v = (p[0] - point[0]) * n[0] + (p[1] - point[1]) * n[1];
            (v, n)
        }
        Shape::Rect { min, max } => rect_inside_grad(p, *min, *max),
        Shape::Union(children) => {
            let mut best: Option<(f64, Point)> = None;
            for c in children {
                let (v, g) = eval_grad(c, p);
                // strict '>' keeps the first child on ties
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, g));
                }
            }
            best.unwrap_or((f64::NEG_INFINITY, [0.0, 0.0]))
        }
        Shape::Intersection(children) => {
            let mut best: Option<(f64, Point)> = None;
            for c in children {
                let (v, g) = eval_grad(c, p);
                if best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, g));
                }
            }
            best.unwrap_or((f64::INFINITY, [0.0, 0.0]))
        }
        Shape::Complement(child) => {
            let (v, g) = eval_grad(child, p);
            (-v, [-g[0], -g[1]])
        }
    }
}

fn normalize(v: Point) -> Point {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

/// Exact rectangle SDF, positive inside.
fn rect_inside_distance(p: Point, min: Point, max: Point) -> f64 {
    let dx = (min[0] - p[0]).max(p[0] - max[0]);
    let dy = (min[1] - p[1]).max(p[1] - max[1]);
    if dx > 0.0 && dy > 0.0 {
        -(dx * dx + dy * dy).sqrt()
    } else {
        -dx.max(dy)
    }
}

fn rect_inside_grad(p: Point, min: Point, max: Point) -> (f64, Point) {
    let dx = (min[0] - p[0]).max(p[0] - max[0]);
    let dy = (min[1] - p[1]).max(p[1] - max[1]);
    // outward x direction: +1 past the max face, -1 past the min face
    let sx = if p[0] - max[0] >= min[0] - p[0] { 1.0 } else { -1.0 };
    let sy = if p[1] - max[1] >= min[1] - p[1] { 1.0 } else { -1.0 };
    if dx > 0.0 && dy > 0.0 {
        let d = (dx * dx + dy * dy).sqrt();
        (-d, [-sx * dx / d, -sy * dy / d])
    } else if dx >= dy {
        (-dx, [-sx, 0.0])
    } else {
        (-dy, [0.0, -sy])
    }
}

/// Scalar values attached to mesh nodes (a P1 field).
#[derive(Debug, Clone)]
pub struct NodalField {
    values: Vec<f64>,
}

impl NodalField {
    /// Wraps raw values; the count must match the mesh node count.
    pub fn from_values(mesh: &Mesh2, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            mesh.nodes().len(),
            "nodal field length must equal node count"
        );
        NodalField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
