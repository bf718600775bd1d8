//! Background triangulations: structured generation, conforming red-green
//! refinement, and the facet adjacency the ghost-penalty terms run over.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::levelset::{LevelSet, Point};

/// Axis-aligned rectangle (the background domain).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        assert!(min[0] < max[0] && min[1] < max[1], "degenerate rectangle");
        Rect { min, max }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Which side of the rectangular domain a boundary facet lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Bottom,
    Top,
    Left,
    Right,
}

/// An edge of the triangulation with its incident cells.
#[derive(Debug, Clone, Copy)]
pub struct Facet {
    /// Endpoint node indices, ordered `nodes[0] < nodes[1]`.
    pub nodes: [usize; 2],
    /// First incident cell (always present).
    pub cell: usize,
    /// Second incident cell; `None` on the boundary.
    pub twin: Option<usize>,
    /// Boundary side; `None` for interior facets.
    pub tag: Option<BoundaryTag>,
}

impl Facet {
    pub fn is_interior(&self) -> bool {
        self.twin.is_some()
    }
}

/// A set of cell indices (refinement marks, facet-set construction).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellSet {
    indices: BTreeSet<usize>,
}

impl CellSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_indices(mesh: &Mesh2, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for i in indices {
            if i >= mesh.cell_count() {
                return Err(Error::CellIndexOutOfBounds {
                    index: i,
                    cells: mesh.cell_count(),
                });
            }
            set.insert(i);
        }
        Ok(CellSet { indices: set })
    }

    pub fn insert(&mut self, cell: usize) {
        self.indices.insert(cell);
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.indices.contains(&cell)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }
}

/// Conforming triangulation of a rectangular domain.
///
/// Immutable after construction; refinement returns a new mesh.
#[derive(Debug, Clone)]
pub struct Mesh2 {
    domain: Rect,
    nodes: Vec<Point>,
    /// CCW node triples.
    cells: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    /// Facet indices per cell, same local order as the edges (0-1, 1-2, 2-0).
    cell_facets: Vec<[usize; 3]>,
}

impl Mesh2 {
    /// Structured grid of `nx` x `ny` quads, each split into two triangles.
    pub fn generate_rect(domain: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::ZeroCount { nx, ny });
        }
        let hx = (domain.max[0] - domain.min[0]) / nx as f64;
        let hy = (domain.max[1] - domain.min[1]) / ny as f64;
        let node_id = |i: usize, j: usize| j * (nx + 1) + i;

        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // snap the far edges exactly onto the domain boundary
                let x = if i == nx { domain.max[0] } else { domain.min[0] + i as f64 * hx };
                let y = if j == ny { domain.max[1] } else { domain.min[1] + j as f64 * hy };
                nodes.push([x, y]);
            }
        }

        let mut cells = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n00 = node_id(i, j);
                let n10 = node_id(i + 1, j);
                let n01 = node_id(i, j + 1);
                let n11 = node_id(i + 1, j + 1);
                cells.push([n00, n10, n11]);
                cells.push([n00, n11, n01]);
            }
        }

        Ok(Self::from_parts(domain, nodes, cells))
    }

    /// Builds facet adjacency and boundary tags from raw nodes and cells.
    fn from_parts(domain: Rect, nodes: Vec<Point>, cells: Vec<[usize; 3]>) -> Self {
        let mut facet_of_edge: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut cell_facets = vec![[usize::MAX; 3]; cells.len()];

        for (c, tri) in cells.iter().enumerate() {
            for (e, (a, b)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                .into_iter()
                .enumerate()
            {
                let key = (a.min(b), a.max(b));
                match facet_of_edge.get(&key) {
                    Some(&f) => {
                        debug_assert!(facets[f].twin.is_none(), "edge shared by 3 cells");
                        facets[f].twin = Some(c);
                        cell_facets[c][e] = f;
                    }
                    None => {
                        let f = facets.len();
                        facets.push(Facet {
                            nodes: [key.0, key.1],
                            cell: c,
                            twin: None,
                            tag: None,
                        });
                        facet_of_edge.insert(key, f);
                        cell_facets[c][e] = f;
                    }
                }
            }
        }

        // tag boundary facets by the domain side both endpoints lie on
        let tol = 1e-12 * (domain.max[0] - domain.min[0]).max(domain.max[1] - domain.min[1]);
        for facet in facets.iter_mut().filter(|f| f.twin.is_none()) {
            let a = nodes[facet.nodes[0]];
            let b = nodes[facet.nodes[1]];
            let on = |v: f64, target: f64| (v - target).abs() <= tol;
            facet.tag = if on(a[1], domain.min[1]) && on(b[1], domain.min[1]) {
                Some(BoundaryTag::Bottom)
            } else if on(a[1], domain.max[1]) && on(b[1], domain.max[1]) {
                Some(BoundaryTag::Top)
            } else if on(a[0], domain.min[0]) && on(b[0], domain.min[0]) {
                Some(BoundaryTag::Left)
            } else if on(a[0], domain.max[0]) && on(b[0], domain.max[0]) {
                Some(BoundaryTag::Right)
            } else {
                None
            };
            debug_assert!(facet.tag.is_some(), "boundary facet off the domain boundary");
        }

        Mesh2 {
            domain,
            nodes,
            cells,
            facets,
            cell_facets,
        }
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Facet indices of a cell, in local edge order.
    pub fn facets_of_cell(&self, cell: usize) -> [usize; 3] {
        self.cell_facets[cell]
    }

    pub fn cell_coords(&self, cell: usize) -> [Point; 3] {
        let [a, b, c] = self.cells[cell];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        signed_area(self.cell_coords(cell))
    }

    pub fn cell_centroid(&self, cell: usize) -> Point {
        let [a, b, c] = self.cell_coords(cell);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.cell_count()).map(|c| self.cell_area(c)).sum()
    }

    pub fn facet_length(&self, facet: usize) -> f64 {
        let [a, b] = self.facets[facet].nodes;
        let pa = self.nodes[a];
        let pb = self.nodes[b];
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    }

    /// Longest edge over the mesh and per-cell minimum of the longest edge.
    pub fn h_min_max(&self) -> (f64, f64) {
        let mut h_min = f64::INFINITY;
        let mut h_max: f64 = 0.0;
        for c in 0..self.cell_count() {
            let [a, b, cc] = self.cell_coords(c);
            let h = edge_len(a, b).max(edge_len(b, cc)).max(edge_len(cc, a));
            h_min = h_min.min(h);
            h_max = h_max.max(h);
        }
        (h_min, h_max)
    }

    /// Cells with any node at signed distance `<= band` (inside the region
    /// described by `ls` or within `band` of its boundary, for level sets
    /// that are negative inside).
    pub fn mark_near(&self, ls: &LevelSet, band: f64) -> CellSet {
        assert!(band >= 0.0, "band must be nonnegative");
        let nodal: Vec<f64> = self.nodes.iter().map(|&p| ls.eval(p)).collect();
        let mut set = CellSet::new();
        for (c, tri) in self.cells.iter().enumerate() {
            if tri.iter().any(|&n| nodal[n] <= band) {
                set.insert(c);
            }
        }
        set
    }

    /// Conforming red-green refinement. Marked cells are quadrisected once
    /// per level; neighbor closures keep the mesh conforming. Green
    /// bisections are only introduced after the last level, so repeated
    /// passes never refine a green closure.
    pub fn refine(&self, marked: &CellSet, levels: usize) -> Mesh2 {
        if levels == 0 || marked.is_empty() {
            return self.clone();
        }

        let mut nodes = self.nodes.clone();
        let mut cells: Vec<[usize; 3]> = self.cells.clone();
        let mut marks: Vec<bool> = (0..cells.len()).map(|c| marked.contains(c)).collect();
        let mut split_edges: HashMap<(usize, usize), usize> = HashMap::new();

        let midpoint = |a: usize, b: usize,
                            nodes: &mut Vec<Point>,
                            split: &mut HashMap<(usize, usize), usize>| {
            let key = (a.min(b), a.max(b));
            *split.entry(key).or_insert_with(|| {
                let pa = nodes[a];
                let pb = nodes[b];
                nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                nodes.len() - 1
            })
        };

        for _ in 0..levels {
            let mut next_cells = Vec::with_capacity(cells.len() * 2);
            let mut next_marks = Vec::with_capacity(cells.len() * 2);
            for (tri, &m) in cells.iter().zip(&marks) {
                if m {
                    let [a, b, c] = *tri;
                    let ab = midpoint(a, b, &mut nodes, &mut split_edges);
                    let bc = midpoint(b, c, &mut nodes, &mut split_edges);
                    let ca = midpoint(c, a, &mut nodes, &mut split_edges);
                    for child in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                        next_cells.push(child);
                        next_marks.push(true);
                    }
                } else {
                    next_cells.push(*tri);
                    next_marks.push(false);
                }
            }
            cells = next_cells;
            marks = next_marks;
        }

        // Closure: any surviving cell whose edges are split more than once,
        // or split on 2+ edges, becomes red; iterate to a fixpoint.
        loop {
            let mut changed = false;
            let mut next_cells = Vec::with_capacity(cells.len());
            for tri in &cells {
                let [a, b, c] = *tri;
                let n_split = [(a, b), (b, c), (c, a)]
                    .iter()
                    .filter(|&&(u, v)| edge_is_split(&split_edges, u, v))
                    .count();
                let deep = [(a, b), (b, c), (c, a)]
                    .iter()
                    .any(|&(u, v)| edge_split_twice(&split_edges, u, v));
                if n_split >= 2 || deep {
                    let ab = midpoint(a, b, &mut nodes, &mut split_edges);
                    let bc = midpoint(b, c, &mut nodes, &mut split_edges);
                    let ca = midpoint(c, a, &mut nodes, &mut split_edges);
                    next_cells.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
                    changed = true;
                } else {
                    next_cells.push(*tri);
                }
            }
            cells = next_cells;
            if !changed {
                break;
            }
        }

        // Green closure: bisect cells with exactly one split edge.
        let mut final_cells = Vec::with_capacity(cells.len());
        for tri in &cells {
            let [a, b, c] = *tri;
            let split: Vec<usize> = [(a, b), (b, c), (c, a)]
                .iter()
                .enumerate()
                .filter(|(_, &(u, v))| edge_is_split(&split_edges, u, v))
                .map(|(e, _)| e)
                .collect();
            match split.as_slice() {
                [] => final_cells.push(*tri),
                [e] => {
                    // opposite vertex to midpoint of the split edge
                    let (u, v, w) = match e {
                        0 => (a, b, c),
                        1 => (b, c, a),
                        _ => (c, a, b),
                    };
                    let m = split_edges[&(u.min(v), u.max(v))];
                    final_cells.push([u, m, w]);
                    final_cells.push([m, v, w]);
                }
                _ => unreachable!("closure left a cell with multiple split edges"),
            }
        }

        // Drop nodes that ended up unused (midpoints of re-split edges).
        let mut used = vec![false; nodes.len()];
        for tri in &final_cells {
            for &n in tri {
                used[n] = true;
            }
        }
        let mut remap = vec![usize::MAX; nodes.len()];
        let mut packed = Vec::with_capacity(nodes.len());
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = packed.len();
                packed.push(nodes[i]);
            }
        }
        let final_cells = final_cells
            .into_iter()
            .map(|[a, b, c]| [remap[a], remap[b], remap[c]])
            .collect();

        Mesh2::from_parts(self.domain, packed, final_cells)
    }
}

fn edge_is_split(split: &HashMap<(usize, usize), usize>, a: usize, b: usize) -> bool {
    split.contains_key(&(a.min(b), a.max(b)))
}

fn edge_split_twice(split: &HashMap<(usize, usize), usize>, a: usize, b: usize) -> bool {
    let key = (a.min(b), a.max(b));
    match split.get(&key) {
        Some(&m) => edge_is_split(split, a, m) || edge_is_split(split, m, b),
        None => false,
    }
}

pub fn signed_area(tri: [Point; 3]) -> f64 {
    0.5 * ((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
        - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]))
}

fn edge_len(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform-bin point locator over a mesh.
pub struct CellLocator<'a> {
    mesh: &'a Mesh2,
    bins: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
}

impl<'a> CellLocator<'a> {
    pub fn new(mesh: &'a Mesh2) -> Self {
        let n = (mesh.cell_count() as f64).sqrt().ceil() as usize;
        let nx = n.max(1);
        let ny = n.max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        let dom = mesh.domain();
        for c in 0..mesh.cell_count() {
            let coords = mesh.cell_coords(c);
            let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
            for p in coords {
                let (i, j) = bin_of(dom, nx, ny, p);
                i0 = i0.min(i);
                j0 = j0.min(j);
                i1 = i1.max(i);
                j1 = j1.max(j);
            }
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(c);
                }
            }
        }
        CellLocator { mesh, bins, nx, ny }
    }

    /// Cell containing `p`, if any (boundary-inclusive).
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !self.mesh.domain().contains(p) {
            return None;
        }
        let (i, j) = bin_of(self.mesh.domain(), self.nx, self.ny, p);
        self.bins[j * self.nx + i]
            .iter()
            .copied()
            .find(|&c| point_in_cell(self.mesh.cell_coords(c), p))
    }
}

fn bin_of(dom: Rect, nx: usize, ny: usize, p: Point) -> (usize, usize) {
    let fx = (p[0] - dom.min[0]) / (dom.max[0] - dom.min[0]);
    let fy = (p[1] - dom.min[1]) / (dom.max[1] - dom.min[1]);
    let i = ((fx * nx as f64) as usize).min(nx - 1);
    let j = ((fy * ny as f64) as usize).min(ny - 1);
    (i, j)
}

fn point_in_cell(tri: [Point; 3], p: Point) -> bool {
    let area = signed_area(tri);
    let tol = -1e-12 * area.abs().max(1e-300);
    let s0 = signed_area([tri[0], tri[1], p]);
    let s1 = signed_area([tri[1], tri[2], p]);
    let s2 = signed_area([tri[2], tri[0], p]);
    s0 >= tol && s1 >= tol && s2 >= tol
}

/// Barycentric interpolation of nodal values at a point inside `cell`.
pub fn interp_p1(mesh: &Mesh2, values: &[f64], cell: usize, p: Point) -> f64 {
    let tri = mesh.cell_coords(cell);
    let [a, b, c] = mesh.cells()[cell];
    let area = signed_area(tri);
    let l0 = signed_area([p, tri[1], tri[2]]) / area;
    let l1 = signed_area([tri[0], p, tri[2]]) / area;
    let l2 = 1.0 - l0 - l1;
    l0 * values[a] + l1 * values[b] + l2 * values[c]
}
