//! Assembly of the stabilized mixed multiscale system over one background
//! mesh.
//!
//! The stiffness matrix carries three kinds of contributions:
//! * the macro (homogenized) elasticity term, weighted by the mixing
//!   weight `alpha` and integrated over whole cells wherever `alpha` is
//!   not identically zero - the homogenized continuum covers pores;
//! * the micro elasticity term, weighted by `1 - alpha` and integrated
//!   over the matrix side of the pore level set via cut-cell quadrature;
//! * ghost-penalty facet terms on jumps of the micro normal stress, which
//!   keep the condition number bounded regardless of how cells are cut.
//!
//! Because the macro integrand vanishes for `phi2 <= -eps` and the micro
//! integrand for `phi2 >= eps`, each term needs geometric cutting by at
//! most one level set.

use rayon::prelude::*;

use crate::cutgeom::{classify, CellClass, CutDecomposition, QuadratureRule, SNAP_REL};
use crate::error::{Error, Result};
use crate::levelset::{NodalField, Point};
use crate::mesh::{interp_p1, signed_area, BoundaryTag, Mesh2};
use crate::mixing::MixingWeight;
use crate::solve::SparseSymSystem;
use crate::sparse::{CooBuilder, CsrMatrix};

/// Diagonal entries below this fraction of the largest diagonal are
/// treated as unsupported and deactivated.
const DEACTIVATION_REL: f64 = 1e-12;

/// Isotropic linear elastic material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
}

impl Material {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if e <= 0.0 || nu <= -1.0 || nu >= 0.5 {
            return Err(Error::InvalidMaterial { e, nu });
        }
        Ok(Material { e, nu })
    }

    /// Lame parameters (plane-strain form; plane stress substitutes the
    /// standard effective lambda).
    pub fn lame(&self, plane: PlaneAssumption) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        match plane {
            PlaneAssumption::Strain => (lambda, mu),
            PlaneAssumption::Stress => (2.0 * lambda * mu / (lambda + 2.0 * mu), mu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneAssumption {
    Strain,
    Stress,
}

/// Voigt constitutive matrix [[l+2m, l, 0], [l, l+2m, 0], [0, 0, m]].
pub fn hooke_voigt(m: &Material, plane: PlaneAssumption) -> [[f64; 3]; 3] {
    let (l, mu) = m.lame(plane);
    [
        [l + 2.0 * mu, l, 0.0],
        [l, l + 2.0 * mu, 0.0],
        [0.0, 0.0, mu],
    ]
}

/// Which facets receive the ghost penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizationMode {
    /// Facets of cells cut by the pore interface.
    CutOnly,
    /// Additionally facets of cells inside pores within the transition band.
    CutPlusTransitionPores,
    /// Additionally facets of every cell intersecting a pore.
    AllPoreElements,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    Traction([f64; 2]),
    Displacement([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub clamped: BoundaryTag,
    pub loaded: BoundaryTag,
    pub load: Load,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureDegrees {
    pub bulk: usize,
    /// Used in cells overlapping the transition band, where the mixing
    /// weight is not polynomial.
    pub transition: usize,
}

impl Default for QuadratureDegrees {
    fn default() -> Self {
        QuadratureDegrees {
            bulk: 2,
            transition: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiscaleConfig {
    pub micro: Material,
    pub macro_mat: Material,
    /// Transition band half-width.
    pub epsilon: f64,
    /// Ghost-penalty parameter.
    pub beta: f64,
    pub mode: RegularizationMode,
    pub bc: BoundaryConditions,
    pub quadrature: QuadratureDegrees,
    pub plane: PlaneAssumption,
}

impl MultiscaleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::ConfigInconsistency(format!(
                "ghost penalty parameter must be nonnegative, got {}",
                self.beta
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::ConfigInconsistency(format!(
                "transition half-width must be positive, got {}",
                self.epsilon
            )));
        }
        if self.bc.clamped == self.bc.loaded {
            return Err(Error::ConfigInconsistency(
                "clamped and loaded boundary tags must differ".into(),
            ));
        }
        for d in [self.quadrature.bulk, self.quadrature.transition] {
            if !(1..=6).contains(&d) {
                return Err(Error::UnsupportedDegree(d));
            }
        }
        Material::new(self.micro.e, self.micro.nu)?;
        Material::new(self.macro_mat.e, self.macro_mat.nu)?;
        Ok(())
    }
}

/// Assembled full-size system plus the bookkeeping needed to reduce it.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub n_dofs: usize,
    /// Full symmetric matrix over 2 * node_count DOFs, Dirichlet rows intact.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Prescribed value per DOF, `None` where free.
    pub dirichlet: Vec<Option<f64>>,
    /// False where the DOF has no support (zero diagonal after assembly).
    pub active: Vec<bool>,
}

impl AssembledSystem {
    /// Free active DOF indices, ascending.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs)
            .filter(|&d| self.active[d] && self.dirichlet[d].is_none())
            .collect()
    }

    /// Reduced SPD system: Dirichlet rows/columns eliminated symmetrically
    /// (prescribed values moved to the right-hand side), inactive DOFs
    /// dropped. Returns the system and the kept-DOF map.
    pub fn reduced(&self) -> (SparseSymSystem, Vec<usize>) {
        let keep = self.free_dofs();
        let mut pos = vec![usize::MAX; self.n_dofs];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let mut builder = CooBuilder::new(keep.len());
        let mut rhs = Vec::with_capacity(keep.len());
        for (new_r, &old_r) in keep.iter().enumerate() {
            let mut b = self.rhs[old_r];
            let (cols, vals) = self.matrix.row(old_r);
            for (c, v) in cols.iter().zip(vals) {
                match self.dirichlet[*c] {
                    Some(u) => b -= v * u,
                    None => {
                        if pos[*c] != usize::MAX {
                            builder.push(new_r, pos[*c], *v);
                        }
                    }
                }
            }
            rhs.push(b);
        }
        (
            SparseSymSystem {
                matrix: builder.to_csr(),
                rhs,
            },
            keep,
        )
    }

    /// Scatters a reduced solution back to the full DOF vector, filling in
    /// prescribed values and zeros on deactivated DOFs.
    pub fn expand(&self, reduced: &[f64], keep: &[usize]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs];
        for (d, value) in self.dirichlet.iter().enumerate() {
            if let Some(u) = value {
                full[d] = *u;
            }
        }
        for (&d, &x) in keep.iter().zip(reduced) {
            full[d] = x;
        }
        full
    }
}

/// Strain-displacement matrix of a P1 triangle (constant per cell),
/// Voigt rows (xx, yy, xy), DOF order (u0x, u0y, u1x, u1y, u2x, u2y).
pub fn b_matrix(coords: [Point; 3]) -> [[f64; 6]; 3] {
    let two_a = 2.0 * signed_area(coords);
    let [p0, p1, p2] = coords;
    let b = [p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]];
    let c = [p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]];
    let mut out = [[0.0; 6]; 3];
    for i in 0..3 {
        out[0][2 * i] = b[i] / two_a;
        out[1][2 * i + 1] = c[i] / two_a;
        out[2][2 * i] = c[i] / two_a;
        out[2][2 * i + 1] = b[i] / two_a;
    }
    out
}

/// Weighted element stiffness: `sum_q w_q alpha_q * B^T D B`. The strain
/// operator is constant for P1, so the quadrature only integrates the
/// weight field.
pub fn element_stiffness(
    coords: [Point; 3],
    d: &[[f64; 3]; 3],
    quad: &QuadratureRule,
    weights: &[f64],
) -> [[f64; 6]; 6] {
    debug_assert_eq!(quad.weights.len(), weights.len());
    let scale: f64 = quad.weights.iter().zip(weights).map(|(w, a)| w * a).sum();
    let b = b_matrix(coords);
    let mut k = [[0.0; 6]; 6];
    if scale == 0.0 {
        return k;
    }
    // D B
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..6 {
            db[r][c] = (0..3).map(|i| d[r][i] * b[i][c]).sum();
        }
    }
    for r in 0..6 {
        for c in 0..6 {
            k[r][c] = scale * (0..3).map(|i| b[i][r] * db[i][c]).sum::<f64>();
        }
    }
    k
}

/// Ghost-penalty coupling block of one interior facet:
/// `(beta h_F / E_m) * int_F [[sigma(u) . n]] . [[sigma(v) . n]] ds` with
/// `h_F` the facet length. Stresses are cell-constant for P1, so the
/// integral is the jump product times `|F|`. Returns the four global node
/// ids and the symmetric 8x8 block over their DOFs.
pub fn ghost_penalty_facet(
    mesh: &Mesh2,
    facet: usize,
    d_micro: &[[f64; 3]; 3],
    beta: f64,
    e_micro: f64,
) -> Result<([usize; 4], [[f64; 8]; 8])> {
    let f = mesh.facets()[facet];
    let twin = f.twin.ok_or(Error::BoundaryFacet(facet))?;
    let cells = [f.cell, twin];

    let pa = mesh.nodes()[f.nodes[0]];
    let pb = mesh.nodes()[f.nodes[1]];
    let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
    let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];

    // union of the two cells' nodes: 4 distinct ids, ascending
    let mut node_union: Vec<usize> = Vec::with_capacity(6);
    for &c in &cells {
        node_union.extend(mesh.cells()[c]);
    }
    node_union.sort_unstable();
    node_union.dedup();
    debug_assert_eq!(node_union.len(), 4);
    let nodes: [usize; 4] = [node_union[0], node_union[1], node_union[2], node_union[3]];

    // jump operator T: 8 union DOFs -> normal stress jump (2 components)
    let mut t = [[0.0; 8]; 2];
    for (side, &c) in cells.iter().enumerate() {
        let sign = if side == 0 { 1.0 } else { -1.0 };
        let coords = mesh.cell_coords(c);
        let b = b_matrix(coords);
        // S = N D B with N mapping Voigt stress to traction on the facet
        let n_rows = [
            [normal[0], 0.0, normal[1]],
            [0.0, normal[1], normal[0]],
        ];
        for (local, &node) in mesh.cells()[c].iter().enumerate() {
            let u = nodes.iter().position(|&g| g == node).unwrap();
            for comp in 0..2 {
                for r in 0..2 {
                    let s: f64 = (0..3)
                        .map(|i| {
                            n_rows[r][i]
                                * (0..3)
                                    .map(|j| d_micro[i][j] * b[j][2 * local + comp])
                                    .sum::<f64>()
                        })
                        .sum();
                    t[r][2 * u + comp] += sign * s;
                }
            }
        }
    }

    let coeff = beta * len * len / e_micro;
    let mut block = [[0.0; 8]; 8];
    for r in 0..8 {
        for c in 0..8 {
            block[r][c] = coeff * (t[0][r] * t[0][c] + t[1][r] * t[1][c]);
        }
    }
    Ok((nodes, block))
}

/// Facets carrying the ghost penalty, ascending. Only facets interior to
/// the fictitious domain (both incident cells overlap the macro or micro
/// physical region) qualify.
pub fn facet_sets(
    mesh: &Mesh2,
    phi1: &NodalField,
    phi2: Option<&NodalField>,
    epsilon: f64,
    mode: RegularizationMode,
) -> Vec<usize> {
    let n_cells = mesh.cell_count();
    let mut class1 = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let vals = mesh.cells()[c].map(|n| phi1.value(n));
        let tol = SNAP_REL * cell_diameter(mesh.cell_coords(c));
        class1.push(classify(vals, tol));
    }

    let phi2_range = |c: usize| -> Option<(f64, f64)> {
        phi2.map(|f| {
            let vals = mesh.cells()[c].map(|n| f.value(n));
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min, max)
        })
    };

    let in_fictitious = |c: usize| -> bool {
        match phi2_range(c) {
            // no zoom: single-scale micro model on the matrix region
            None => class1[c] != CellClass::PositiveSide,
            Some((min2, max2)) => {
                let overlaps_macro = max2 >= -epsilon;
                let overlaps_micro = class1[c] != CellClass::PositiveSide && min2 <= epsilon;
                overlaps_macro || overlaps_micro
            }
        }
    };

    let in_transition = |c: usize| -> bool {
        match phi2_range(c) {
            None => false,
            Some((min2, max2)) => min2 <= epsilon && max2 >= -epsilon,
        }
    };

    let cell_selected = |c: usize| -> bool {
        let cut = class1[c] == CellClass::Cut;
        let touches_pore = class1[c] != CellClass::NegativeSide;
        match mode {
            RegularizationMode::CutOnly => cut,
            RegularizationMode::CutPlusTransitionPores => {
                cut || (touches_pore && in_transition(c))
            }
            RegularizationMode::AllPoreElements => cut || touches_pore,
        }
    };

    let mut out = Vec::new();
    for (fi, f) in mesh.facets().iter().enumerate() {
        let Some(twin) = f.twin else { continue };
        if !(in_fictitious(f.cell) && in_fictitious(twin)) {
            continue;
        }
        if cell_selected(f.cell) || cell_selected(twin) {
            out.push(fi);
        }
    }
    out
}

fn cell_diameter(tri: [Point; 3]) -> f64 {
    let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(tri[0], tri[1]).max(d(tri[1], tri[2])).max(d(tri[2], tri[0]))
}

/// Macro/micro weight pairs sampled at every bulk quadrature point the
/// assembly uses. Backs the partition-of-unity checks.
pub fn weight_samples(
    mesh: &Mesh2,
    phi2: Option<&NodalField>,
    epsilon: f64,
    quadrature: QuadratureDegrees,
) -> Result<Vec<(Point, f64, f64)>> {
    let weight = MixingWeight::new(epsilon);
    let mut out = Vec::new();
    for c in 0..mesh.cell_count() {
        let degree = cell_degree(mesh, phi2, epsilon, quadrature, c);
        let rule = crate::cutgeom::triangle_rule(mesh.cell_coords(c), degree)?;
        for &p in &rule.points {
            let alpha = match phi2 {
                Some(f) => weight.alpha(interp_p1(mesh, f.values(), c, p)),
                None => 0.0,
            };
            out.push((p, alpha, 1.0 - alpha));
        }
    }
    Ok(out)
}

fn cell_degree(
    mesh: &Mesh2,
    phi2: Option<&NodalField>,
    epsilon: f64,
    quadrature: QuadratureDegrees,
    c: usize,
) -> usize {
    match phi2 {
        None => quadrature.bulk,
        Some(f) => {
            let vals = mesh.cells()[c].map(|n| f.value(n));
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min <= epsilon && max >= -epsilon {
                quadrature.transition
            } else {
                quadrature.bulk
            }
        }
    }
}

/// Assembles the full stabilized multiscale system.
///
/// `phi1` is the pore level set (positive inside pores) projected on the
/// mesh; `phi2` the zoom level set (negative inside zooms), or `None` for
/// a single-scale micro model over the whole domain.
pub fn assemble(
    mesh: &Mesh2,
    phi1: &NodalField,
    phi2: Option<&NodalField>,
    config: &MultiscaleConfig,
) -> Result<AssembledSystem> {
    config.validate()?;
    let n_dofs = 2 * mesh.node_count();
    let weight = MixingWeight::new(config.epsilon);
    let d_macro = hooke_voigt(&config.macro_mat, config.plane);
    let d_micro = hooke_voigt(&config.micro, config.plane);
    let decomp = CutDecomposition::build(mesh, phi1)?;
    let eps = config.epsilon;

    // per-cell blocks in parallel, merged in cell order for determinism
    let cell_blocks: Vec<Result<[[f64; 6]; 6]>> = (0..mesh.cell_count())
        .into_par_iter()
        .map(|c| {
            let coords = mesh.cell_coords(c);
            let degree = cell_degree(mesh, phi2, eps, config.quadrature, c);
            let mut k = [[0.0; 6]; 6];

            let (skip_macro, skip_micro) = match phi2 {
                None => (true, false),
                Some(f) => {
                    let vals = mesh.cells()[c].map(|n| f.value(n));
                    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    // alpha vanishes on the whole cell below the band,
                    // 1 - alpha above it
                    (max <= -eps, min >= eps)
                }
            };

            let alpha_at = |p: Point| -> f64 {
                match phi2 {
                    Some(f) => weight.alpha(interp_p1(mesh, f.values(), c, p)),
                    None => 0.0,
                }
            };

            if !skip_macro {
                let rule = crate::cutgeom::triangle_rule(coords, degree)?;
                let alphas: Vec<f64> = rule.points.iter().map(|&p| alpha_at(p)).collect();
                add_block(&mut k, &element_stiffness(coords, &d_macro, &rule, &alphas));
            }
            if !skip_micro {
                if let Some(rule) =
                    decomp.cell_quadrature(mesh, c, crate::cutgeom::Sign::Negative, degree)?
                {
                    let alphas: Vec<f64> =
                        rule.points.iter().map(|&p| 1.0 - alpha_at(p)).collect();
                    add_block(&mut k, &element_stiffness(coords, &d_micro, &rule, &alphas));
                }
            }
            Ok(k)
        })
        .collect();

    let mut builder = CooBuilder::new(n_dofs);
    for (c, block) in cell_blocks.into_iter().enumerate() {
        let block = block?;
        let nodes = mesh.cells()[c];
        scatter_block(&mut builder, &nodes, &block);
    }

    // ghost penalty
    if config.beta > 0.0 {
        let facets = facet_sets(mesh, phi1, phi2, eps, config.mode);
        let gp_blocks: Vec<Result<([usize; 4], [[f64; 8]; 8])>> = facets
            .par_iter()
            .map(|&fi| ghost_penalty_facet(mesh, fi, &d_micro, config.beta, config.micro.e))
            .collect();
        for entry in gp_blocks {
            let (nodes, block) = entry?;
            scatter_block4(&mut builder, &nodes, &block);
        }
    }

    let matrix = builder.to_csr();

    // load vector: traction line integral with the macro weight along the
    // loaded edge (1 where no zoom is declared)
    let mut rhs = vec![0.0; n_dofs];
    if let Load::Traction(t) = config.bc.load {
        for f in mesh.facets().iter().filter(|f| f.tag == Some(config.bc.loaded)) {
            let [a, b] = f.nodes;
            let pa = mesh.nodes()[a];
            let pb = mesh.nodes()[b];
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            let alpha_of = |p: Point| -> f64 {
                match phi2 {
                    Some(field) => {
                        // nodal interpolation restricted to the edge
                        let cell = f.cell;
                        weight.alpha(interp_p1(mesh, field.values(), cell, p))
                    }
                    None => 1.0,
                }
            };
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let (aa, am, ab) = (alpha_of(pa), alpha_of(mid), alpha_of(pb));
            // Simpson along the edge against each linear test function
            let wa = len * (aa + 2.0 * am) / 6.0;
            let wb = len * (ab + 2.0 * am) / 6.0;
            rhs[2 * a] += wa * t[0];
            rhs[2 * a + 1] += wa * t[1];
            rhs[2 * b] += wb * t[0];
            rhs[2 * b + 1] += wb * t[1];
        }
    }

    // Dirichlet values: loaded edge first (when displacement driven), then
    // the clamp, which wins shared corners
    let mut dirichlet = vec![None; n_dofs];
    if let Load::Displacement(u) = config.bc.load {
        for f in mesh.facets().iter().filter(|f| f.tag == Some(config.bc.loaded)) {
            for &n in &f.nodes {
                dirichlet[2 * n] = Some(u[0]);
                dirichlet[2 * n + 1] = Some(u[1]);
            }
        }
    }
    for f in mesh.facets().iter().filter(|f| f.tag == Some(config.bc.clamped)) {
        for &n in &f.nodes {
            dirichlet[2 * n] = Some(0.0);
            dirichlet[2 * n + 1] = Some(0.0);
        }
    }

    // deactivate unsupported DOFs
    let diag = matrix.diag();
    let max_diag = diag.iter().copied().fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return Err(Error::SingularSystem("assembled matrix has an empty diagonal".into()));
    }
    let active: Vec<bool> = diag.iter().map(|&d| d > DEACTIVATION_REL * max_diag).collect();

    Ok(AssembledSystem {
        n_dofs,
        matrix,
        rhs,
        dirichlet,
        active,
    })
}

fn add_block(k: &mut [[f64; 6]; 6], other: &[[f64; 6]; 6]) {
    for r in 0..6 {
        for c in 0..6 {
            k[r][c] += other[r][c];
        }
    }
}

fn scatter_block(builder: &mut CooBuilder, nodes: &[usize; 3], block: &[[f64; 6]; 6]) {
    let dofs = [
        2 * nodes[0],
        2 * nodes[0] + 1,
        2 * nodes[1],
        2 * nodes[1] + 1,
        2 * nodes[2],
        2 * nodes[2] + 1,
    ];
    for r in 0..6 {
        for c in 0..6 {
            builder.push(dofs[r], dofs[c], block[r][c]);
        }
    }
}

fn scatter_block4(builder: &mut CooBuilder, nodes: &[usize; 4], block: &[[f64; 8]; 8]) {
    let mut dofs = [0usize; 8];
    for (i, &n) in nodes.iter().enumerate() {
        dofs[2 * i] = 2 * n;
        dofs[2 * i + 1] = 2 * n + 1;
    }
    for r in 0..8 {
        for c in 0..8 {
            builder.push(dofs[r], dofs[c], block[r][c]);
        }
    }
}
