//! Fluid and structure meshes.
//!
//! The fluid domain is an axis-aligned square split into `n x n` cells, each
//! cell cut along one diagonal in a union-jack pattern. Every coarse
//! triangle is red-refined into four children; velocities live on the fine
//! triangulation and pressures on the coarse one.
//!
//! Structures are either closed curves (codimension one) parametrized over
//! `[0, 2pi)` or triangulated areas (codimension zero).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Relative geometric tolerance; scaled by the domain diameter.
pub const GEO_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Interior,
    /// No-slip: both velocity components vanish.
    Wall,
    /// Symmetry line with x-normal: the x component vanishes.
    SymmetryX,
    /// Symmetry line with y-normal: the y component vanishes.
    SymmetryY,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideCondition {
    Wall,
    SymmetryX,
    SymmetryY,
}

/// Boundary condition per side of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub left: SideCondition,
    pub right: SideCondition,
    pub bottom: SideCondition,
    pub top: SideCondition,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self::walls()
    }
}

impl BoundarySpec {
    pub fn walls() -> Self {
        Self {
            left: SideCondition::Wall,
            right: SideCondition::Wall,
            bottom: SideCondition::Wall,
            top: SideCondition::Wall,
        }
    }

    /// Lower-left quarter of a symmetric problem: the left and bottom sides
    /// are symmetry lines of the full configuration.
    pub fn quarter_symmetry() -> Self {
        Self {
            left: SideCondition::SymmetryX,
            right: SideCondition::Wall,
            bottom: SideCondition::SymmetryY,
            top: SideCondition::Wall,
        }
    }

    /// A symmetry condition must have the side's normal direction.
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, cond: SideCondition, forbidden: SideCondition| {
            if cond == forbidden {
                Err(Error::invalid(format!(
                    "{name} side cannot carry {cond:?}: its normal does not match"
                )))
            } else {
                Ok(())
            }
        };
        check("left", self.left, SideCondition::SymmetryY)?;
        check("right", self.right, SideCondition::SymmetryY)?;
        check("bottom", self.bottom, SideCondition::SymmetryX)?;
        check("top", self.top, SideCondition::SymmetryX)?;
        Ok(())
    }
}

/// Coarse/fine structured triangulation pair of a square domain.
#[derive(Clone, Debug)]
pub struct FluidMesh {
    pub origin: Point,
    pub side: f64,
    /// Coarse cells per side.
    pub n: usize,
    /// Fine vertices, row-major on a `(2n+1) x (2n+1)` grid.
    pub vertices: Vec<Point>,
    /// Fine triangles; triangle `4c + k` is child `k` of coarse triangle `c`.
    pub triangles: Vec<[usize; 3]>,
    /// Fine-vertex index of each coarse vertex.
    pub coarse_vertices: Vec<usize>,
    /// Coarse triangles as indices into `coarse_vertices`.
    pub coarse_triangles: Vec<[usize; 3]>,
    pub coarse_to_fine: Vec<[usize; 4]>,
    /// Per fine vertex, for the default all-wall boundary.
    pub boundary_tags: Vec<BoundaryTag>,
    pub h_x: f64,
}

/// Fine triangle containing a point, with barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLocation {
    pub triangle_index: usize,
    pub barycentric: [f64; 3],
}

/// The unit square `[0,1]^2` with `n` coarse cells per side.
pub fn build_unit_square_mesh(n: usize) -> Result<FluidMesh> {
    build_square_mesh([0.0, 0.0], 1.0, n)
}

pub fn build_square_mesh(origin: Point, side: f64, n: usize) -> Result<FluidMesh> {
    if n == 0 {
        return Err(Error::invalid("mesh needs at least one cell per side"));
    }
    if side <= 0.0 || !side.is_finite() || !origin.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!("bad square domain: origin {origin:?}, side {side}")));
    }
    let m = 2 * n + 1;
    let hf = side / (2 * n) as f64;
    let fine = |i: usize, j: usize| j * m + i;

    let mut vertices = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            vertices.push([origin[0] + i as f64 * hf, origin[1] + j as f64 * hf]);
        }
    }

    let mut coarse_vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            coarse_vertices.push(fine(2 * i, 2 * j));
        }
    }

    let coarse = |i: usize, j: usize| j * (n + 1) + i;
    let mut coarse_triangles = Vec::with_capacity(2 * n * n);
    let mut coarse_to_fine = Vec::with_capacity(2 * n * n);
    let mut triangles = Vec::with_capacity(8 * n * n);
    for j in 0..n {
        for i in 0..n {
            // grid coordinates (fine units) of the four cell corners
            let a = (2 * i, 2 * j);
            let b = (2 * i + 2, 2 * j);
            let c = (2 * i + 2, 2 * j + 2);
            let d = (2 * i, 2 * j + 2);
            let (ca, cb, cc, cd) = (coarse(i, j), coarse(i + 1, j), coarse(i + 1, j + 1), coarse(i, j + 1));
            // diagonals radiate from the domain center, so no coarse
            // triangle has two boundary edges (those carry spurious
            // pressure modes)
            let halves = if (2 * i + 1 < n) == (2 * j + 1 < n) {
                [([a, b, c], [ca, cb, cc]), ([a, c, d], [ca, cc, cd])]
            } else {
                [([a, b, d], [ca, cb, cd]), ([b, c, d], [cb, cc, cd])]
            };
            for (corners, cverts) in halves {
                let mid = |p: (usize, usize), q: (usize, usize)| ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
                let [p, q, r] = corners;
                let (pq, qr, rp) = (mid(p, q), mid(q, r), mid(r, p));
                let idx = |g: (usize, usize)| fine(g.0, g.1);
                let first = triangles.len();
                triangles.push([idx(p), idx(pq), idx(rp)]);
                triangles.push([idx(pq), idx(q), idx(qr)]);
                triangles.push([idx(rp), idx(qr), idx(r)]);
                triangles.push([idx(pq), idx(qr), idx(rp)]);
                coarse_to_fine.push([first, first + 1, first + 2, first + 3]);
                coarse_triangles.push(cverts);
            }
        }
    }

    let mut mesh = FluidMesh {
        origin,
        side,
        n,
        vertices,
        triangles,
        coarse_vertices,
        coarse_triangles,
        coarse_to_fine,
        boundary_tags: Vec::new(),
        h_x: side / n as f64,
    };
    mesh.boundary_tags = mesh.tags_for(&BoundarySpec::walls());
    Ok(mesh)
}

impl FluidMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_coarse_vertices(&self) -> usize {
        self.coarse_vertices.len()
    }

    /// Fine mesh size.
    pub fn h_fine(&self) -> f64 {
        self.h_x / 2.0
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn diameter(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }

    pub fn eps_geo(&self) -> f64 {
        GEO_EPS * self.diameter()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn coarse_corners(&self, t: usize) -> [Point; 3] {
        self.coarse_triangles[t].map(|v| self.vertices[self.coarse_vertices[v]])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.corners(t))
    }

    /// Constant gradients of the three P1 hat functions on fine triangle `t`.
    pub fn p1_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        p1_gradients(&self.corners(t))
    }

    /// Coarse triangle that fine triangle `t` was refined from.
    pub fn parent(&self, t: usize) -> usize {
        t / 4
    }

    /// Per-vertex tags for a boundary specification. Vertices on two sides
    /// with different symmetry normals become walls.
    pub fn tags_for(&self, spec: &BoundarySpec) -> Vec<BoundaryTag> {
        let m = 2 * self.n + 1;
        (0..self.vertices.len())
            .map(|v| {
                let (i, j) = (v % m, v / m);
                let mut sides = Vec::with_capacity(2);
                if i == 0 {
                    sides.push(spec.left);
                }
                if i == m - 1 {
                    sides.push(spec.right);
                }
                if j == 0 {
                    sides.push(spec.bottom);
                }
                if j == m - 1 {
                    sides.push(spec.top);
                }
                if sides.is_empty() {
                    return BoundaryTag::Interior;
                }
                if sides.contains(&SideCondition::Wall) {
                    return BoundaryTag::Wall;
                }
                let has_x = sides.contains(&SideCondition::SymmetryX);
                let has_y = sides.contains(&SideCondition::SymmetryY);
                match (has_x, has_y) {
                    (true, true) => BoundaryTag::Wall,
                    (true, false) => BoundaryTag::SymmetryX,
                    _ => BoundaryTag::SymmetryY,
                }
            })
            .collect()
    }

    pub fn contains(&self, x: Point) -> bool {
        let eps = self.eps_geo();
        (0..2).all(|k| x[k] >= self.origin[k] - eps && x[k] <= self.origin[k] + self.side + eps)
    }

    /// Finds the fine triangle containing `x`. Points on shared edges or
    /// vertices resolve to the lowest triangle index.
    pub fn locate_point(&self, x: Point) -> Result<PointLocation> {
        if !x.iter().all(|v| v.is_finite()) || !self.contains(x) {
            return Err(Error::OutOfDomain { point: x });
        }
        let eps = self.eps_geo();
        let bary_tol = eps / self.h_fine();
        let n = self.n;
        let cell_range = |k: usize| {
            let lo = ((x[k] - self.origin[k] - eps) / self.h_x).floor();
            let hi = ((x[k] - self.origin[k] + eps) / self.h_x).floor();
            let clamp = |v: f64| (v.max(0.0) as usize).min(n - 1);
            (clamp(lo), clamp(hi))
        };
        let (i0, i1) = cell_range(0);
        let (j0, j1) = cell_range(1);

        let mut best: Option<PointLocation> = None;
        let mut fallback: Option<(f64, PointLocation)> = None;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let cell = j * n + i;
                for t in 8 * cell..8 * cell + 8 {
                    if best.is_some_and(|b| b.triangle_index < t) {
                        break;
                    }
                    let bary = barycentric(&self.corners(t), x);
                    let worst = bary.iter().cloned().fold(f64::INFINITY, f64::min);
                    let loc = PointLocation {
                        triangle_index: t,
                        barycentric: bary,
                    };
                    if worst >= -bary_tol {
                        if best.is_none_or(|b| t < b.triangle_index) {
                            best = Some(loc);
                        }
                        break;
                    }
                    if fallback.is_none_or(|(w, _)| worst > w) {
                        fallback = Some((worst, loc));
                    }
                }
            }
        }
        // Within eps of the boundary every point has a containing triangle;
        // the fallback only guards against rounding in the cell lookup.
        best.or(fallback.map(|(_, l)| l)).ok_or(Error::OutOfDomain { point: x })
    }

    /// Value of a scalar fine-P1 field (one value per fine vertex) at `x`.
    pub fn interpolate(&self, values: &[f64], x: Point) -> Result<f64> {
        let loc = self.locate_point(x)?;
        let tri = self.triangles[loc.triangle_index];
        Ok((0..3).map(|k| loc.barycentric[k] * values[tri[k]]).sum())
    }
}

pub fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub fn barycentric(p: &[Point; 3], x: Point) -> [f64; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let dx = x[0] - p[0][0];
    let dy = x[1] - p[0][1];
    let l1 = (dx * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * dy) / det;
    let l2 = ((p[1][0] - p[0][0]) * dy - dx * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

pub fn p1_gradients(p: &[Point; 3]) -> [[f64; 2]; 3] {
    let det = 2.0 * signed_area(p);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    g
}

/// Geometry of an immersed structure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StructureShape {
    Ellipse { a: f64, b: f64, center: Point },
    Rectangle { width: f64, height: f64, center: Point },
}

impl StructureShape {
    pub fn area(&self) -> f64 {
        match *self {
            StructureShape::Ellipse { a, b, .. } => PI * a * b,
            StructureShape::Rectangle { width, height, .. } => width * height,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            StructureShape::Ellipse { a, b, center } => {
                a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && center.iter().all(|c| c.is_finite())
            }
            StructureShape::Rectangle {
                width,
                height,
                center,
            } => {
                width > 0.0
                    && height > 0.0
                    && width.is_finite()
                    && height.is_finite()
                    && center.iter().all(|c| c.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate structure shape {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureKind {
    /// Codimension one: a curve, reference domain `B` one-dimensional.
    Curve,
    /// Codimension zero: an area, reference domain `B` two-dimensional.
    Area,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StructureCells {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

/// One structure cell with its reference geometry.
///
/// Reference gradients are stored as 2-vectors for both kinds; curves only
/// use the first component (`d/ds`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureElement {
    nodes: [usize; 3],
    len: usize,
    /// Reference measure (parameter length or reference area).
    pub measure: f64,
    pub ref_gradients: [[f64; 2]; 3],
}

impl StructureElement {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes[..self.len]
    }

    pub fn ref_gradients(&self) -> &[[f64; 2]] {
        &self.ref_gradients[..self.len]
    }
}

/// Discretization of the reference structure domain `B`.
#[derive(Clone, Debug)]
pub struct StructureMesh {
    pub kind: StructureKind,
    /// Reference coordinates. Curves store the parameter `s` in component 0.
    pub ref_nodes: Vec<Point>,
    pub cells: StructureCells,
    pub closed: bool,
    pub h_s: f64,
    /// Initial placement `X_0` of every node in the fluid domain.
    pub placement: Vec<Point>,
    elements: Vec<StructureElement>,
}

/// Node count of a closed curve whose parameter spacing is closest to `h_s`.
pub fn curve_nodes_for_spacing(h_s: f64) -> usize {
    ((2.0 * PI / h_s).round() as usize).max(3)
}

pub fn build_structure_curve(shape: StructureShape, n_s: usize) -> Result<StructureMesh> {
    shape.check()?;
    if n_s < 3 {
        return Err(Error::invalid(format!("a closed curve needs at least 3 nodes, got {n_s}")));
    }
    let ds = 2.0 * PI / n_s as f64;
    let ref_nodes: Vec<Point> = (0..n_s).map(|j| [j as f64 * ds, 0.0]).collect();
    let placement: Vec<Point> = match shape {
        StructureShape::Ellipse { a, b, center } => ref_nodes
            .iter()
            .map(|s| [center[0] + a * s[0].cos(), center[1] + b * s[0].sin()])
            .collect(),
        StructureShape::Rectangle {
            width,
            height,
            center,
        } => {
            let perimeter = 2.0 * (width + height);
            let lower_left = [center[0] - 0.5 * width, center[1] - 0.5 * height];
            (0..n_s)
                .map(|j| {
                    let l = perimeter * j as f64 / n_s as f64;
                    let (x, y) = if l <= width {
                        (l, 0.0)
                    } else if l <= width + height {
                        (width, l - width)
                    } else if l <= 2.0 * width + height {
                        (width - (l - width - height), height)
                    } else {
                        (0.0, height - (l - 2.0 * width - height))
                    };
                    [lower_left[0] + x, lower_left[1] + y]
                })
                .collect()
        }
    };
    let segments: Vec<[usize; 2]> = (0..n_s).map(|j| [j, (j + 1) % n_s]).collect();
    Ok(StructureMesh::new(
        StructureKind::Curve,
        ref_nodes,
        StructureCells::Segments(segments),
        true,
        ds,
        placement,
    ))
}

/// Triangulates the region bounded by `shape` with mesh size about `h_s`.
/// Ellipses use concentric rings (ring `k` carries `6k` nodes); rectangles a
/// structured grid. The reference domain coincides with the placement.
pub fn build_structure_area(shape: StructureShape, h_s: f64) -> Result<StructureMesh> {
    shape.check()?;
    if h_s <= 0.0 || !h_s.is_finite() {
        return Err(Error::invalid(format!("structure mesh size must be positive, got {h_s}")));
    }
    let (nodes, triangles) = match shape {
        StructureShape::Ellipse { a, b, center } => ring_disk(a, b, center, h_s),
        StructureShape::Rectangle {
            width,
            height,
            center,
        } => grid_rectangle(width, height, center, h_s),
    };
    Ok(StructureMesh::new(
        StructureKind::Area,
        nodes.clone(),
        StructureCells::Triangles(triangles),
        true,
        h_s,
        nodes,
    ))
}

fn ring_disk(a: f64, b: f64, center: Point, h_s: f64) -> (Vec<Point>, Vec<[usize; 3]>) {
    let rings = ((a.max(b) / h_s).ceil() as usize).max(1);
    let mut nodes = vec![center];
    // first node index of each ring; ring 0 is the center
    let mut start = vec![0usize];
    for k in 1..=rings {
        start.push(nodes.len());
        let r = k as f64 / rings as f64;
        for j in 0..6 * k {
            let th = 2.0 * PI * j as f64 / (6 * k) as f64;
            nodes.push([center[0] + a * r * th.cos(), center[1] + b * r * th.sin()]);
        }
    }
    let mut tris = Vec::new();
    for k in 1..=rings {
        let outer_n = 6 * k;
        let inner_n = 6 * (k - 1);
        let outer = |j: usize| start[k] + j % outer_n;
        if inner_n == 0 {
            for j in 0..outer_n {
                tris.push([0, outer(j), outer(j + 1)]);
            }
            continue;
        }
        let inner = |i: usize| start[k - 1] + i % inner_n;
        let (mut i, mut j) = (0usize, 0usize);
        while i < inner_n || j < outer_n {
            let next_in = (i + 1) as f64 / inner_n as f64;
            let next_out = (j + 1) as f64 / outer_n as f64;
            if j < outer_n && (i == inner_n || next_out <= next_in) {
                tris.push([inner(i), outer(j), outer(j + 1)]);
                j += 1;
            } else {
                tris.push([inner(i), outer(j), inner(i + 1)]);
                i += 1;
            }
        }
    }
    (nodes, tris)
}

fn grid_rectangle(width: f64, height: f64, center: Point, h_s: f64) -> (Vec<Point>, Vec<[usize; 3]>) {
    let nx = ((width / h_s).ceil() as usize).max(1);
    let ny = ((height / h_s).ceil() as usize).max(1);
    let x0 = center[0] - 0.5 * width;
    let y0 = center[1] - 0.5 * height;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                x0 + width * i as f64 / nx as f64,
                y0 + height * j as f64 / ny as f64,
            ]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    (nodes, tris)
}

impl StructureMesh {
    fn new(
        kind: StructureKind,
        ref_nodes: Vec<Point>,
        cells: StructureCells,
        closed: bool,
        h_s: f64,
        placement: Vec<Point>,
    ) -> Self {
        let elements = match &cells {
            StructureCells::Segments(segs) => {
                let period = 2.0 * PI;
                segs.iter()
                    .map(|&[p, q]| {
                        let mut len = ref_nodes[q][0] - ref_nodes[p][0];
                        if closed {
                            len = len.rem_euclid(period);
                        }
                        StructureElement {
                            nodes: [p, q, usize::MAX],
                            len: 2,
                            measure: len,
                            ref_gradients: [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0; 2]],
                        }
                    })
                    .collect()
            }
            StructureCells::Triangles(tris) => tris
                .iter()
                .map(|&t| {
                    let p = t.map(|v| ref_nodes[v]);
                    StructureElement {
                        nodes: t,
                        len: 3,
                        measure: signed_area(&p),
                        ref_gradients: p1_gradients(&p),
                    }
                })
                .collect(),
        };
        Self {
            kind,
            ref_nodes,
            cells,
            closed,
            h_s,
            placement,
            elements,
        }
    }

    /// Replaces the initial placement, keeping the reference domain.
    pub fn with_placement(mut self, placement: Vec<Point>) -> Result<Self> {
        if placement.len() != self.ref_nodes.len() {
            return Err(Error::invalid(format!(
                "placement has {} nodes, mesh has {}",
                placement.len(),
                self.ref_nodes.len()
            )));
        }
        self.placement = placement;
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.ref_nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[StructureElement] {
        &self.elements
    }

    /// Reference measure of `B` (total parameter length or reference area).
    pub fn measure(&self) -> f64 {
        self.elements.iter().map(|e| e.measure).sum()
    }

    /// Node cycle of a closed curve, starting from node 0; `None` for areas.
    pub fn node_cycle(&self) -> Option<Vec<usize>> {
        let StructureCells::Segments(segs) = &self.cells else {
            return None;
        };
        let n = self.n_nodes();
        let mut next = vec![usize::MAX; n];
        for &[p, q] in segs {
            next[p] = q;
        }
        let mut cycle = vec![0];
        let mut cur = next[0];
        while cur != 0 && cur != usize::MAX && cycle.len() <= n {
            cycle.push(cur);
            cur = next[cur];
        }
        Some(cycle)
    }
}
