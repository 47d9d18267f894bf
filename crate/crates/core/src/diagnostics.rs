//! Energy, conservation, residual and error metrics.

use serde::{Deserialize, Serialize};

use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::mesh::{signed_area, FluidMesh, Point, StructureCells, StructureMesh};
use crate::sparse::{norm2, CsrMatrix};

/// Termination status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    EnergyBlowupDetected,
    StructureEscape,
    SolverFailure,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Completed => "completed",
            RunStatus::EnergyBlowupDetected => "energy_blowup_detected",
            RunStatus::StructureEscape => "structure_escape",
            RunStatus::SolverFailure => "solver_failure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            RunStatus::Running,
            RunStatus::Completed,
            RunStatus::EnergyBlowupDetected,
            RunStatus::StructureEscape,
            RunStatus::SolverFailure,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

/// One row of the per-step diagnostics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub kinetic_fluid: f64,
    pub kinetic_structure: f64,
    pub elastic: f64,
    pub total_energy: f64,
    pub energy_ratio: f64,
    pub energy_ineq_lhs: f64,
    pub area: f64,
    pub div_residual: f64,
    pub coupling_residual: f64,
    pub status: RunStatus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub kinetic_fluid: f64,
    pub kinetic_structure: f64,
    pub elastic: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic_fluid + self.kinetic_structure + self.elastic
    }
}

/// Operators needed to evaluate the discrete energy.
pub struct EnergyOperators<'a> {
    /// Velocity mass matrix `M_f`.
    pub fluid_mass: &'a CsrMatrix,
    /// Vector structure mass matrix `M_s`.
    pub structure_mass: &'a CsrMatrix,
    /// Elastic stiffness `K_s` (already scaled by kappa).
    pub structure_stiffness: &'a CsrMatrix,
    pub rho_f: f64,
    pub delta_rho: f64,
    pub dt: f64,
}

/// `Pi = 1/2 rho_f |u|^2 + 1/2 drho |(X - X_prev)/dt|^2_B + 1/2 X^T K_s X`.
pub fn total_energy(ops: &EnergyOperators, u: &[f64], x: &[f64], x_prev: &[f64]) -> EnergyParts {
    let kinetic_fluid = 0.5 * ops.rho_f * ops.fluid_mass.bilinear(u, u);
    let kinetic_structure = if ops.delta_rho == 0.0 {
        0.0
    } else {
        let v: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| (a - b) / ops.dt).collect();
        0.5 * ops.delta_rho * ops.structure_mass.bilinear(&v, &v)
    };
    let elastic = 0.5 * ops.structure_stiffness.bilinear(x, x);
    EnergyParts {
        kinetic_fluid,
        kinetic_structure,
        elastic,
    }
}

/// Discrete energy-inequality functional between two consecutive states:
/// `(Pi^{n+1} - Pi^n)/dt + a(u^{n+1}, u^{n+1})`. Non-positive for exact
/// solves of the semi-implicit scheme.
pub fn energy_inequality_lhs(new: &EnergyParts, old: &EnergyParts, dissipation: f64, dt: f64) -> f64 {
    (new.total() - old.total()) / dt + dissipation
}

/// Tolerance `1e-8 max(1, Pi^n)` for the energy inequality.
pub fn energy_tolerance(previous_total: f64) -> f64 {
    1e-8 * previous_total.max(1.0)
}

/// Area enclosed by the deformed structure: shoelace formula on the node
/// loop of a closed curve, sum of current triangle areas for area meshes.
pub fn enclosed_area(structure: &StructureMesh, positions: &[Point]) -> Result<f64> {
    match &structure.cells {
        StructureCells::Segments(_) => {
            if !structure.closed {
                return Err(Error::invalid("enclosed area needs a closed curve"));
            }
            let cycle = structure.node_cycle().unwrap_or_default();
            if cycle.len() != structure.n_nodes() {
                return Err(Error::invalid("structure segments do not form a single loop"));
            }
            let loop_pts: Vec<Point> = cycle.iter().map(|&i| positions[i]).collect();
            Ok(polygon_area(&loop_pts))
        }
        StructureCells::Triangles(tris) => Ok(tris
            .iter()
            .map(|t| signed_area(&t.map(|v| positions[v])))
            .sum()),
    }
}

/// Signed shoelace area (positive for counter-clockwise loops).
pub fn polygon_area(points: &[Point]) -> f64 {
    let n = points.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

/// Kinematic coupling residual
/// `r = |L_f(X_k) u_k - L_s (X_k - X^n)/dt|_B`, with the dual norm
/// approximated by the lumped structure mass.
pub fn coupling_residual(
    coupling_fluid: &CsrMatrix,
    coupling_structure: &CsrMatrix,
    u: &[f64],
    x: &[f64],
    x_old: &[f64],
    dt: f64,
    lumped_mass: &[f64],
) -> f64 {
    let lu = coupling_fluid.mul_vec(u);
    let dx: Vec<f64> = x.iter().zip(x_old).map(|(a, b)| (a - b) / dt).collect();
    let ls = coupling_structure.mul_vec(&dx);
    lu.iter()
        .zip(&ls)
        .zip(lumped_mass)
        .map(|((a, b), m)| (a - b) * (a - b) / m)
        .sum::<f64>()
        .sqrt()
}

/// Euclidean norm of `B u`.
pub fn divergence_residual(divergence: &CsrMatrix, u: &[f64]) -> f64 {
    norm2(&divergence.mul_vec(u))
}

/// Per-interval convergence rates `log(e_i/e_{i+1}) / log(h_i/h_{i+1})`.
pub fn fit_rate(samples: &[(f64, f64)]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("rates need at least two samples"));
    }
    if samples.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(Error::invalid("rates need positive, finite sizes and errors"));
    }
    Ok(samples
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect())
}

/// `|x - reference|` in the norm induced by `mass`.
pub fn structure_l2_error(mass: &CsrMatrix, x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() || mass.nrows() != x.len() {
        return Err(Error::invalid("structure fields live on different meshes"));
    }
    let d: Vec<f64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    Ok(mass.bilinear(&d, &d).max(0.0).sqrt())
}

/// L2 norm of `u_h - u_ref` for two velocity fields on the same fine mesh.
pub fn velocity_l2_error(fluid_mass: &CsrMatrix, u: &[f64], reference: &[f64]) -> Result<f64> {
    structure_l2_error(fluid_mass, u, reference)
}

/// L2 error of a `[P1 | P0]` pressure against a pointwise exact pressure.
/// Each coarse triangle is split `4^levels` times and integrated with the
/// 3-point edge-midpoint rule, so discontinuous exact fields are resolved to
/// the sub-triangle size.
pub fn pressure_l2_error(fluid: &FluidMesh, p: &[f64], exact: impl Fn(Point) -> f64, levels: u32) -> Result<f64> {
    let np1 = fluid.n_coarse_vertices();
    let nc = fluid.coarse_triangles.len();
    if p.len() != np1 + nc {
        return Err(Error::invalid(format!(
            "pressure has {} entries, mesh needs {}",
            p.len(),
            np1 + nc
        )));
    }
    let mut err2 = 0.0;
    for (t, tri) in fluid.coarse_triangles.iter().enumerate() {
        let corners = fluid.coarse_corners(t);
        let pv = [p[tri[0]], p[tri[1]], p[tri[2]]];
        let p0 = p[np1 + t];
        for sub in subdivide(corners, levels) {
            let area = signed_area(&sub).abs();
            for k in 0..3 {
                let a = sub[k];
                let b = sub[(k + 1) % 3];
                let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                let lam = crate::mesh::barycentric(&corners, m);
                let ph = lam[0] * pv[0] + lam[1] * pv[1] + lam[2] * pv[2] + p0;
                let d = ph - exact(m);
                err2 += area / 3.0 * d * d;
            }
        }
    }
    Ok(err2.sqrt())
}

fn subdivide(t: [Point; 3], levels: u32) -> Vec<[Point; 3]> {
    let mut tris = vec![t];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(4 * tris.len());
        for [a, b, c] in tris {
            let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        tris = next;
    }
    tris
}

/// Winding number of `x` with respect to a closed polygon.
pub fn winding_number(loop_pts: &[Point], x: Point) -> i32 {
    let n = loop_pts.len();
    let mut w = 0;
    for i in 0..n {
        let a = loop_pts[i];
        let b = loop_pts[(i + 1) % n];
        let cross = (b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= x[1] {
            if b[1] > x[1] && cross > 0.0 {
                w += 1;
            }
        } else if b[1] <= x[1] && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Mean pressure inside minus mean pressure outside a closed curve.
///
/// The pressure is averaged over coarse triangles classified by the winding
/// number of their centroid; triangles whose corners are not all on the same
/// side of the curve are excluded.
pub fn pressure_jump(disc: &Discretization, p: &[f64], x: &[f64]) -> Result<f64> {
    let structure = &disc.structure;
    if !matches!(structure.cells, StructureCells::Segments(_)) || !structure.closed {
        return Err(Error::invalid("pressure jump needs a closed curve"));
    }
    let cycle = structure.node_cycle().unwrap_or_default();
    if cycle.len() != structure.n_nodes() {
        return Err(Error::invalid("structure segments do not form a single loop"));
    }
    let positions = disc.dofs_to_positions(x);
    let loop_pts: Vec<Point> = cycle.iter().map(|&i| positions[i]).collect();
    let fluid = &disc.fluid;
    let np1 = fluid.n_coarse_vertices();
    if p.len() != np1 + fluid.coarse_triangles.len() {
        return Err(Error::invalid("pressure vector does not match the mesh"));
    }
    let (mut sum_in, mut area_in, mut sum_out, mut area_out) = (0.0, 0.0, 0.0, 0.0);
    for (t, tri) in fluid.coarse_triangles.iter().enumerate() {
        let c = fluid.coarse_corners(t);
        let inside: Vec<bool> = c.iter().map(|&q| winding_number(&loop_pts, q) != 0).collect();
        if inside.iter().any(|&b| b != inside[0]) {
            continue;
        }
        let centroid = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        if (winding_number(&loop_pts, centroid) != 0) != inside[0] {
            continue;
        }
        let area = signed_area(&c).abs();
        let mean = (p[tri[0]] + p[tri[1]] + p[tri[2]]) / 3.0 + p[np1 + t];
        if inside[0] {
            sum_in += area * mean;
            area_in += area;
        } else {
            sum_out += area * mean;
            area_out += area;
        }
    }
    if area_in == 0.0 || area_out == 0.0 {
        return Err(Error::invalid("curve leaves no uncut triangles on one side"));
    }
    Ok(sum_in / area_in - sum_out / area_out)
}

/// Pressure jump predicted by normal force balance on a discrete circle-like
/// curve: the mean of `kappa |dX/ds|^2 / R^2` over the segments, with `R` the
/// distance of each segment midpoint from the centroid of the loop.
pub fn force_balance_jump(structure: &StructureMesh, positions: &[Point], kappa: f64) -> Result<f64> {
    let StructureCells::Segments(segs) = &structure.cells else {
        return Err(Error::invalid("force balance needs a curve"));
    };
    let n = positions.len() as f64;
    let c = positions
        .iter()
        .fold([0.0; 2], |acc, p| [acc[0] + p[0] / n, acc[1] + p[1] / n]);
    let elements = structure.elements();
    let mut acc = 0.0;
    for (e, &[a, b]) in elements.iter().zip(segs) {
        let (pa, pb) = (positions[a], positions[b]);
        let ds = e.measure;
        let dxds2 = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)) / (ds * ds);
        let mid = [0.5 * (pa[0] + pb[0]) - c[0], 0.5 * (pa[1] + pb[1]) - c[1]];
        let r2 = mid[0] * mid[0] + mid[1] * mid[1];
        acc += kappa * dxds2 / r2;
    }
    Ok(acc / segs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structure_curve, StructureShape};

    #[test]
    fn shoelace_unit_square() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(polygon_area(&sq), 1.0);
        assert_eq!(winding_number(&sq, [0.5, 0.5]), 1);
        assert_eq!(winding_number(&sq, [1.5, 0.5]), 0);
    }

    #[test]
    fn circle_area_and_energy_limit() {
        let shape = StructureShape::Ellipse {
            a: 0.5,
            b: 0.5,
            center: [0.5, 0.5],
        };
        let s = build_structure_curve(shape, 256).unwrap();
        let area = enclosed_area(&s, &s.placement).unwrap();
        let exact = std::f64::consts::PI * 0.25;
        assert!((area - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn rates() {
        assert_eq!(fit_rate(&[(1.0, 1e-1), (0.5, 5e-2)]).unwrap(), vec![1.0]);
        assert!(fit_rate(&[(1.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (0.5, 0.0)]).is_err());
    }

    #[test]
    fn status_names_round_trip() {
        for s in ["completed", "energy_blowup_detected", "structure_escape", "solver_failure"] {
            assert_eq!(RunStatus::parse(s).unwrap().as_str(), s);
        }
    }
}
