//! Cut-cell geometry against a P1 nodal level set: classification,
//! subtessellation by the linear zero isoline, and quadrature rules
//! restricted to one sign region.

use crate::error::{Error, Result};
use crate::levelset::{NodalField, Point};
use crate::mesh::{signed_area, Mesh2};

/// Relative snap tolerance: nodal values within `SNAP_REL * cell diameter`
/// of zero are treated as positive.
pub const SNAP_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    NegativeSide,
    PositiveSide,
    Cut,
}

/// Sub-triangle of a cut cell, tagged with the sign of its region.
#[derive(Debug, Clone, Copy)]
pub struct SubTri {
    pub coords: [Point; 3],
    pub sign: Sign,
}

/// Subtessellation of a single cut cell.
#[derive(Debug, Clone)]
pub struct CutCell {
    pub subs: Vec<SubTri>,
    /// Interface segment endpoints, on the cell's sign-changing edges.
    pub interface: [Point; 2],
}

/// Per-cell view of the decomposition.
#[derive(Debug, Clone)]
pub enum CellCut {
    Full(Sign),
    Cut(CutCell),
}

/// Classification and signed subtessellation of every cell of a mesh
/// against a nodal P1 level set.
#[derive(Debug, Clone)]
pub struct CutDecomposition {
    cells: Vec<CellCut>,
}

/// Snaps near-zero values to `+tol`, then classifies by nodal signs.
pub fn classify(phi: [f64; 3], tol: f64) -> CellClass {
    let snapped = snap(phi, tol);
    let neg = snapped.iter().filter(|&&v| v < 0.0).count();
    match neg {
        3 => CellClass::NegativeSide,
        0 => CellClass::PositiveSide,
        _ => CellClass::Cut,
    }
}

fn snap(phi: [f64; 3], tol: f64) -> [f64; 3] {
    phi.map(|v| if v.abs() < tol { tol } else { v })
}

/// Locates the interface by linear interpolation along the sign-changing
/// edges and splits the cell into sign-tagged sub-triangles.
pub fn subtessellate(coords: [Point; 3], phi: [f64; 3], tol: f64) -> Result<CutCell> {
    let phi = snap(phi, tol);
    debug_assert_eq!(classify_snapped(phi), CellClass::Cut);

    // rotate so vertex 0 is the lone-sign vertex
    let lone = (0..3)
        .find(|&i| {
            let s = phi[i] > 0.0;
            (phi[(i + 1) % 3] > 0.0) != s && (phi[(i + 2) % 3] > 0.0) != s
        })
        .expect("cut cell has a lone-sign vertex");
    let idx = [lone, (lone + 1) % 3, (lone + 2) % 3];
    let p = idx.map(|i| coords[i]);
    let v = idx.map(|i| phi[i]);

    let cut01 = edge_zero(p[0], p[1], v[0], v[1]);
    let cut02 = edge_zero(p[0], p[2], v[0], v[2]);
    for endpoint in [cut01, cut02] {
        if p.contains(&endpoint) {
            return Err(Error::DegenerateCut);
        }
    }

    let lone_sign = sign_of(v[0]);
    let pair_sign = sign_of(v[1]);
    let mut subs = vec![
        SubTri {
            coords: orient([p[0], cut01, cut02]),
            sign: lone_sign,
        },
        SubTri {
            coords: orient([cut01, p[1], p[2]]),
            sign: pair_sign,
        },
        SubTri {
            coords: orient([cut01, p[2], cut02]),
            sign: pair_sign,
        },
    ];
    subs.retain(|s| signed_area(s.coords) > 0.0);

    Ok(CutCell {
        subs,
        interface: [cut01, cut02],
    })
}

fn classify_snapped(phi: [f64; 3]) -> CellClass {
    let neg = phi.iter().filter(|&&v| v < 0.0).count();
    match neg {
        3 => CellClass::NegativeSide,
        0 => CellClass::PositiveSide,
        _ => CellClass::Cut,
    }
}

fn sign_of(v: f64) -> Sign {
    if v < 0.0 {
        Sign::Negative
    } else {
        Sign::Positive
    }
}

/// Zero of the linear interpolant along edge a-b.
fn edge_zero(a: Point, b: Point, va: f64, vb: f64) -> Point {
    let t = va / (va - vb);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn orient(tri: [Point; 3]) -> [Point; 3] {
    if signed_area(tri) < 0.0 {
        [tri[0], tri[2], tri[1]]
    } else {
        tri
    }
}

impl CutDecomposition {
    /// Decomposes every cell of `mesh` against the nodal field `phi`.
    pub fn build(mesh: &Mesh2, phi: &NodalField) -> Result<Self> {
        assert_eq!(phi.len(), mesh.node_count());
        let mut cells = Vec::with_capacity(mesh.cell_count());
        for c in 0..mesh.cell_count() {
            let tri = mesh.cells()[c];
            let coords = mesh.cell_coords(c);
            let vals = tri.map(|n| phi.value(n));
            let tol = SNAP_REL * cell_diameter(coords);
            match classify(vals, tol) {
                CellClass::NegativeSide => cells.push(CellCut::Full(Sign::Negative)),
                CellClass::PositiveSide => cells.push(CellCut::Full(Sign::Positive)),
                CellClass::Cut => cells.push(CellCut::Cut(subtessellate(coords, vals, tol)?)),
            }
        }
        Ok(CutDecomposition { cells })
    }

    pub fn cell(&self, c: usize) -> &CellCut {
        &self.cells[c]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn class(&self, c: usize) -> CellClass {
        match &self.cells[c] {
            CellCut::Full(Sign::Negative) => CellClass::NegativeSide,
            CellCut::Full(Sign::Positive) => CellClass::PositiveSide,
            CellCut::Cut(_) => CellClass::Cut,
        }
    }

    pub fn cut_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(|&c| matches!(self.cells[c], CellCut::Cut(_)))
    }

    /// (negative-side area, positive-side area, interface length)
    pub fn measures(&self, mesh: &Mesh2) -> (f64, f64, f64) {
        let mut neg = 0.0;
        let mut pos = 0.0;
        let mut iface = 0.0;
        for (c, cut) in self.cells.iter().enumerate() {
            match cut {
                CellCut::Full(Sign::Negative) => neg += mesh.cell_area(c),
                CellCut::Full(Sign::Positive) => pos += mesh.cell_area(c),
                CellCut::Cut(cc) => {
                    for sub in &cc.subs {
                        let a = signed_area(sub.coords);
                        match sub.sign {
                            Sign::Negative => neg += a,
                            Sign::Positive => pos += a,
                        }
                    }
                    let [p, q] = cc.interface;
                    iface += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                }
            }
        }
        (neg, pos, iface)
    }

    /// Quadrature over the `sign` region of one cell. `None` when the cell
    /// has no part on that side.
    pub fn cell_quadrature(
        &self,
        mesh: &Mesh2,
        c: usize,
        sign: Sign,
        degree: usize,
    ) -> Result<Option<QuadratureRule>> {
        let reference = reference_rule(degree)?;
        Ok(match &self.cells[c] {
            CellCut::Full(s) => {
                if *s == sign {
                    Some(map_rule(reference, mesh.cell_coords(c)))
                } else {
                    None
                }
            }
            CellCut::Cut(cc) => {
                let mut rule = QuadratureRule::default();
                for sub in cc.subs.iter().filter(|s| s.sign == sign) {
                    rule.extend(map_rule(reference, sub.coords));
                }
                if rule.points.is_empty() {
                    None
                } else {
                    Some(rule)
                }
            }
        })
    }

    /// Concatenated quadrature over the whole `sign` region of the mesh.
    pub fn region_quadrature(
        &self,
        mesh: &Mesh2,
        sign: Sign,
        degree: usize,
    ) -> Result<QuadratureRule> {
        let mut rule = QuadratureRule::default();
        for c in 0..self.cells.len() {
            if let Some(r) = self.cell_quadrature(mesh, c, sign, degree)? {
                rule.extend(r);
            }
        }
        Ok(rule)
    }
}

fn cell_diameter(tri: [Point; 3]) -> f64 {
    let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(tri[0], tri[1]).max(d(tri[1], tri[2])).max(d(tri[2], tri[0]))
}

/// Physical quadrature points with area weights.
#[derive(Debug, Clone, Default)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn extend(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Quadrature rule on a single triangle given by its corner coordinates.
pub fn triangle_rule(coords: [Point; 3], degree: usize) -> Result<QuadratureRule> {
    Ok(map_rule(reference_rule(degree)?, coords))
}

/// Barycentric reference rules: centroid (degree 1), 3-point (degree 2),
/// 6-point (degree 4), 12-point (degree 6). A request is served by the
/// smallest rule that is exact at that degree.
fn reference_rule(degree: usize) -> Result<&'static [([f64; 3], f64)]> {
    const D1: [([f64; 3], f64); 1] = [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)];
    const D2: [([f64; 3], f64); 3] = [
        ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
        ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
        ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
    ];
    // Dunavant degree-4 rule
    const A1: f64 = 0.445_948_490_915_965;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const W2: f64 = 0.109_951_743_655_322;
    const D4: [([f64; 3], f64); 6] = [
        ([1.0 - 2.0 * A1, A1, A1], W1),
        ([A1, 1.0 - 2.0 * A1, A1], W1),
        ([A1, A1, 1.0 - 2.0 * A1], W1),
        ([1.0 - 2.0 * A2, A2, A2], W2),
        ([A2, 1.0 - 2.0 * A2, A2], W2),
        ([A2, A2, 1.0 - 2.0 * A2], W2),
    ];
    // Dunavant degree-6 rule
    const B1: f64 = 0.249_286_745_170_910;
    const V1: f64 = 0.116_786_275_726_379;
    const B2: f64 = 0.063_089_014_491_502;
    const V2: f64 = 0.050_844_906_370_207;
    const C1: f64 = 0.310_352_451_033_785;
    const C2: f64 = 0.636_502_499_121_399;
    const V3: f64 = 0.082_851_075_618_374;
    const D6: [([f64; 3], f64); 12] = [
        ([1.0 - 2.0 * B1, B1, B1], V1),
        ([B1, 1.0 - 2.0 * B1, B1], V1),
        ([B1, B1, 1.0 - 2.0 * B1], V1),
        ([1.0 - 2.0 * B2, B2, B2], V2),
        ([B2, 1.0 - 2.0 * B2, B2], V2),
        ([B2, B2, 1.0 - 2.0 * B2], V2),
        ([C1, C2, 1.0 - C1 - C2], V3),
        ([C2, C1, 1.0 - C1 - C2], V3),
        ([C1, 1.0 - C1 - C2, C2], V3),
        ([C2, 1.0 - C1 - C2, C1], V3),
        ([1.0 - C1 - C2, C1, C2], V3),
        ([1.0 - C1 - C2, C2, C1], V3),
    ];
    match degree {
        1 => Ok(&D1),
        2 => Ok(&D2),
        3 | 4 => Ok(&D4),
        5 | 6 => Ok(&D6),
        d => Err(Error::UnsupportedDegree(d)),
    }
}

fn map_rule(reference: &[([f64; 3], f64)], coords: [Point; 3]) -> QuadratureRule {
    let area = signed_area(coords).abs();
    let mut rule = QuadratureRule {
        points: Vec::with_capacity(reference.len()),
        weights: Vec::with_capacity(reference.len()),
    };
    for &(bary, w) in reference {
        let x = bary[0] * coords[0][0] + bary[1] * coords[1][0] + bary[2] * coords[2][0];
        let y = bary[0] * coords[0][1] + bary[1] * coords[1][1] + bary[2] * coords[2][1];
        rule.points.push([x, y]);
        rule.weights.push(w * area);
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::LevelSet;
    use crate::mesh::Rect;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn classify_basic() {
        assert_eq!(classify([-1.0, -1.0, -1.0], TOL), CellClass::NegativeSide);
        assert_eq!(classify([1.0, 1.0, 1.0], TOL), CellClass::PositiveSide);
        assert_eq!(classify([-1.0, 1.0, 1.0], TOL), CellClass::Cut);
    }

    #[test]
    fn classify_snaps_zeros_positive() {
        assert_eq!(classify([0.0, 1.0, 1.0], TOL), CellClass::PositiveSide);
        assert_eq!(classify([0.0, -1.0, -1.0], TOL), CellClass::Cut);
        assert_eq!(classify([0.0, 0.0, 0.0], TOL), CellClass::PositiveSide);
    }

    fn right_triangle() -> [Point; 3] {
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    }

    #[test]
    fn subtessellate_lone_negative() {
        let cut = subtessellate(right_triangle(), [-1.0, 1.0, 1.0], TOL).unwrap();
        let mut ends = cut.interface;
        ends.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ends[0][0] - 0.0).abs() < 1e-15 && (ends[0][1] - 0.5).abs() < 1e-15);
        assert!((ends[1][0] - 0.5).abs() < 1e-15 && (ends[1][1] - 0.0).abs() < 1e-15);

        let neg: f64 = cut
            .subs
            .iter()
            .filter(|s| s.sign == Sign::Negative)
            .map(|s| signed_area(s.coords))
            .sum();
        let pos: f64 = cut
            .subs
            .iter()
            .filter(|s| s.sign == Sign::Positive)
            .map(|s| signed_area(s.coords))
            .sum();
        assert!((neg - 0.125).abs() < 1e-14);
        assert!((pos - 0.375).abs() < 1e-14);
    }

    #[test]
    fn subtessellate_two_negative() {
        let cut = subtessellate(right_triangle(), [-1.0, -1.0, 1.0], TOL).unwrap();
        let negs: Vec<_> = cut.subs.iter().filter(|s| s.sign == Sign::Negative).collect();
        assert_eq!(negs.len(), 2);
        let neg: f64 = negs.iter().map(|s| signed_area(s.coords)).sum();
        assert!((neg - 0.375).abs() < 1e-14);
    }

    #[test]
    fn interface_endpoints_zero_the_interpolant() {
        let coords = [[0.2, 0.1], [1.3, 0.4], [0.5, 1.7]];
        let phi = [-0.8, 0.6, 1.9];
        let cut = subtessellate(coords, phi, TOL).unwrap();
        for p in cut.interface {
            // P1 interpolant at p via barycentric coordinates
            let area = signed_area(coords);
            let l0 = signed_area([p, coords[1], coords[2]]) / area;
            let l1 = signed_area([coords[0], p, coords[2]]) / area;
            let l2 = 1.0 - l0 - l1;
            let v = l0 * phi[0] + l1 * phi[1] + l2 * phi[2];
            assert!(v.abs() < 1e-12);
            // and endpoints stay inside the parent cell
            for l in [l0, l1, l2] {
                assert!((-1e-14..=1.0 + 1e-14).contains(&l));
            }
        }
    }

    #[test]
    fn quadrature_exactness_on_reference() {
        // exact integral of x^a y^b over the unit right triangle: a! b! / (a+b+2)!
        fn exact(a: u32, b: u32) -> f64 {
            let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
            fact(a) * fact(b) / fact(a + b + 2)
        }
        for degree in 1..=6usize {
            let rule = triangle_rule(right_triangle(), degree).unwrap();
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let num: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!(
                        (num - exact(a, b)).abs() < 1e-14,
                        "degree {degree} monomial x^{a} y^{b}: {num} vs {}",
                        exact(a, b)
                    );
                }
            }
        }
        assert!(matches!(
            triangle_rule(right_triangle(), 7),
            Err(Error::UnsupportedDegree(7))
        ));
    }

    #[test]
    fn uncut_cell_centroid_rule() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [1.0, 1.0]), 1, 1).unwrap();
        let ls = LevelSet::pores(&[]); // no pores: everything negative
        let phi = ls.project_p1(&mesh);
        let decomp = CutDecomposition::build(&mesh, &phi).unwrap();
        let rule = decomp
            .cell_quadrature(&mesh, 0, Sign::Negative, 1)
            .unwrap()
            .unwrap();
        assert_eq!(rule.points.len(), 1);
        assert!((rule.total_weight() - 0.5).abs() < 1e-15);
        assert!((rule.points[0][0] - mesh.cell_centroid(0)[0]).abs() < 1e-15);
    }

    #[test]
    fn cut_cell_negative_weight_matches_subarea() {
        let coords = right_triangle();
        let cut = subtessellate(coords, [-1.0, 1.0, 1.0], TOL).unwrap();
        let w: f64 = cut
            .subs
            .iter()
            .filter(|s| s.sign == Sign::Negative)
            .map(|s| triangle_rule(s.coords, 1).unwrap().total_weight())
            .sum();
        assert!((w - 0.125).abs() < 1e-14);
    }

    #[test]
    fn measures_partition_and_interface() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [12.0, 10.0]), 60, 50).unwrap();
        let ls = LevelSet::pores(&[([6.0, 5.0], 1.0)]);
        let phi = ls.project_p1(&mesh);
        let decomp = CutDecomposition::build(&mesh, &phi).unwrap();
        let (neg, pos, iface) = decomp.measures(&mesh);
        assert!((neg + pos - 120.0).abs() < 1e-12 * 120.0);
        // pore area and perimeter approach the circle values
        assert!((pos - std::f64::consts::PI).abs() < 0.05);
        assert!((iface - 2.0 * std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn interface_length_converges_to_perimeter() {
        // h = 0.05 resolves the r=1 circle within 1%
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [12.0, 10.0]), 240, 200).unwrap();
        let ls = LevelSet::pores(&[([6.0, 5.0], 1.0)]);
        let phi = ls.project_p1(&mesh);
        let decomp = CutDecomposition::build(&mesh, &phi).unwrap();
        let (_, _, iface) = decomp.measures(&mesh);
        let exact = 2.0 * std::f64::consts::PI;
        assert!((iface - exact).abs() / exact < 0.01, "iface = {iface}");
    }

    #[test]
    fn region_quadrature_weight_equals_measured_area() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [12.0, 10.0]), 30, 25).unwrap();
        let ls = LevelSet::pores(&[([6.0, 5.0], 1.0), ([3.0, 3.0], 0.7)]);
        let phi = ls.project_p1(&mesh);
        let decomp = CutDecomposition::build(&mesh, &phi).unwrap();
        let (neg, pos, _) = decomp.measures(&mesh);
        for degree in [1, 2, 4] {
            let wn = decomp
                .region_quadrature(&mesh, Sign::Negative, degree)
                .unwrap()
                .total_weight();
            let wp = decomp
                .region_quadrature(&mesh, Sign::Positive, degree)
                .unwrap()
                .total_weight();
            assert!((wn - neg).abs() < 1e-12 * neg);
            assert!((wp - pos).abs() < 1e-12 * pos);
        }
    }

    #[test]
    fn no_interface_without_pores() {
        let mesh = Mesh2::generate_rect(Rect::new([0.0, 0.0], [1.0, 1.0]), 4, 4).unwrap();
        let ls = LevelSet::pores(&[]);
        let phi = ls.project_p1(&mesh);
        let decomp = CutDecomposition::build(&mesh, &phi).unwrap();
        let (neg, pos, iface) = decomp.measures(&mesh);
        assert_eq!(iface, 0.0);
        assert_eq!(pos, 0.0);
        assert!((neg - 1.0).abs() < 1e-14);
    }

    proptest! {
        /// Sub-areas of any cut cell sum to the parent area.
        #[test]
        fn subareas_partition_parent(
            v0 in -2.0..2.0f64,
            v1 in -2.0..2.0f64,
            v2 in -2.0..2.0f64,
        ) {
            let phi = [v0, v1, v2];
            prop_assume!(classify(phi, TOL) == CellClass::Cut);
            let coords = [[0.3, -0.1], [1.4, 0.2], [0.6, 1.1]];
            let cut = subtessellate(coords, phi, TOL).unwrap();
            let total: f64 = cut.subs.iter().map(|s| signed_area(s.coords)).sum();
            let parent = signed_area(coords);
            prop_assert!((total - parent).abs() < 1e-12 * parent);
            for s in &cut.subs {
                prop_assert!(signed_area(s.coords) > 0.0);
            }
        }

        /// Classification is invariant under positive scaling of the values.
        #[test]
        fn classify_scale_invariant(
            v0 in -2.0..2.0f64,
            v1 in -2.0..2.0f64,
            v2 in -2.0..2.0f64,
            scale in 1e-3..1e3f64,
        ) {
            let a = classify([v0, v1, v2], TOL);
            let b = classify([scale * v0, scale * v1, scale * v2], TOL * scale);
            prop_assert_eq!(a, b);
        }
    }
}
