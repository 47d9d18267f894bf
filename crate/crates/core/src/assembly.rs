//! Matrix and vector blocks of the coupled fluid-structure system.
//!
//! Velocity, structure and multiplier vectors are numbered block-wise by
//! component (see [`DofMap`](crate::fem::DofMap)); pressure vectors are
//! `[P1 part | P0 part]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{build_dof_maps, quadrature, DofMaps, ElementFamily};
use crate::mesh::{barycentric, BoundarySpec, FluidMesh, Point, StructureKind, StructureMesh};
use crate::sparse::{CsrMatrix, TripletList};

/// Realization of the bilinear forms pairing multipliers with velocities
/// (`c1`) and with structure velocities (`c2`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// `(mu, z)_B`
    #[default]
    L2Pairing,
    /// `(grad_s mu, grad_s z)_B + (mu, z)_B`
    H1Product,
}

/// Quadrature degree on structure cells for every coupling integral.
pub const STRUCTURE_QUADRATURE_DEGREE: usize = 5;

/// A quadrature point on the reference structure domain.
#[derive(Clone, Copy, Debug)]
pub struct StructureQuadPoint {
    pub cell: usize,
    /// Local basis values (the unused third slot is zero for segments).
    pub values: [f64; 3],
    /// Weight including the reference cell measure.
    pub weight: f64,
}

/// Meshes, dof maps and the structure quadrature; owns every assembly routine.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub fluid: FluidMesh,
    pub structure: StructureMesh,
    pub bc: BoundarySpec,
    pub dofs: DofMaps,
    squad: Vec<StructureQuadPoint>,
}

/// `M_s`, `K_s` and `A_s = (drho/dt^2) M_s + K_s`.
#[derive(Clone, Debug)]
pub struct StructureBlocks {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub operator: CsrMatrix,
}

/// Fluid-side evaluation of the structure map at one quadrature point.
struct MappedPoint {
    fine_triangle: usize,
    phi: [f64; 3],
    grad_phi: [[f64; 2]; 3],
    /// Deformation gradient; column 1 vanishes for curves.
    f: [[f64; 2]; 2],
}

impl Discretization {
    pub fn new(fluid: FluidMesh, structure: StructureMesh, bc: BoundarySpec) -> Result<Self> {
        let dofs = build_dof_maps(&fluid, &structure, &bc)?;
        let squad = structure_quadrature(&structure)?;
        Ok(Self {
            fluid,
            structure,
            bc,
            dofs,
            squad,
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.dofs.velocity.n_dofs()
    }

    pub fn n_pressure(&self) -> usize {
        self.dofs.n_pressure()
    }

    pub fn n_structure(&self) -> usize {
        self.dofs.structure.n_dofs()
    }

    pub fn n_multiplier(&self) -> usize {
        self.dofs.multiplier.n_dofs()
    }

    pub fn structure_quadrature(&self) -> &[StructureQuadPoint] {
        &self.squad
    }

    /// Flattens node positions into a block-numbered dof vector.
    pub fn positions_to_dofs(&self, points: &[Point]) -> Vec<f64> {
        let n = points.len();
        let mut x = vec![0.0; 2 * n];
        for (k, p) in points.iter().enumerate() {
            x[k] = p[0];
            x[n + k] = p[1];
        }
        x
    }

    pub fn dofs_to_positions(&self, x: &[f64]) -> Vec<Point> {
        let n = x.len() / 2;
        (0..n).map(|k| [x[k], x[n + k]]).collect()
    }

    /// Velocity of a fine-P1 field at a point.
    pub fn velocity_at(&self, u: &[f64], point: Point) -> Result<Point> {
        let loc = self.fluid.locate_point(point)?;
        let nv = self.fluid.n_vertices();
        let tri = self.fluid.triangles[loc.triangle_index];
        let mut out = [0.0; 2];
        for (k, &v) in tri.iter().enumerate() {
            out[0] += loc.barycentric[k] * u[v];
            out[1] += loc.barycentric[k] * u[nv + v];
        }
        Ok(out)
    }

    /// Scalar-component fluid mass matrix on the fine mesh.
    fn scalar_mass(&self) -> Vec<(usize, [usize; 3], [[f64; 3]; 3])> {
        (0..self.fluid.triangles.len())
            .map(|t| {
                let area = self.fluid.triangle_area(t);
                let mut m = [[area / 12.0; 3]; 3];
                for (k, row) in m.iter_mut().enumerate() {
                    row[k] = area / 6.0;
                }
                (t, self.fluid.triangles[t], m)
            })
            .collect()
    }

    /// `M_f`, the vector-valued velocity mass matrix.
    pub fn assemble_fluid_mass(&self) -> CsrMatrix {
        let nv = self.fluid.n_vertices();
        let mut t = TripletList::new(2 * nv, 2 * nv);
        for comp in 0..2 {
            for (_, tri, m) in self.scalar_mass() {
                for a in 0..3 {
                    for b in 0..3 {
                        t.push(comp * nv + tri[a], comp * nv + tri[b], m[a][b]);
                    }
                }
            }
        }
        t.to_csr()
    }

    /// Viscous part of `K_f`: `nu (grad u + grad u^T, grad v + grad v^T)`.
    pub fn assemble_viscous(&self, nu: f64) -> CsrMatrix {
        let nv = self.fluid.n_vertices();
        let locals: Vec<_> = (0..self.fluid.triangles.len())
            .into_par_iter()
            .map(|t| {
                let area = self.fluid.triangle_area(t);
                let g = self.fluid.p1_gradients(t);
                // symmetric gradient of basis function (component c, vertex a)
                let sym = |c: usize, a: usize| {
                    let mut s = [[0.0; 2]; 2];
                    for al in 0..2 {
                        s[c][al] += g[a][al];
                        s[al][c] += g[a][al];
                    }
                    s
                };
                let mut local = [[0.0; 6]; 6];
                for i in 0..6 {
                    let si = sym(i / 3, i % 3);
                    for j in 0..6 {
                        let sj = sym(j / 3, j % 3);
                        let mut dd = 0.0;
                        for r in 0..2 {
                            for c in 0..2 {
                                dd += si[r][c] * sj[r][c];
                            }
                        }
                        local[i][j] = nu * area * dd;
                    }
                }
                local
            })
            .collect();
        let mut trip = TripletList::new(2 * nv, 2 * nv);
        for (t, local) in locals.iter().enumerate() {
            let tri = self.fluid.triangles[t];
            let dof = |i: usize| (i / 3) * nv + tri[i % 3];
            for i in 0..6 {
                for j in 0..6 {
                    trip.push(dof(i), dof(j), local[i][j]);
                }
            }
        }
        trip.to_csr()
    }

    /// Skew-symmetrized transport `T(u)_{ij} = b(u, phi_j, phi_i)` with
    /// `b(u,v,w) = (rho/2)[(u.grad v, w) - (u.grad w, v)]`.
    pub fn assemble_transport(&self, u_prev: &[f64], rho_f: f64) -> Result<CsrMatrix> {
        let nv = self.fluid.n_vertices();
        if u_prev.len() != 2 * nv {
            return Err(Error::invalid(format!(
                "transport velocity has {} entries, expected {}",
                u_prev.len(),
                2 * nv
            )));
        }
        if !u_prev.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("transport velocity contains non-finite entries"));
        }
        let mass = self.scalar_mass();
        let locals: Vec<[[f64; 3]; 3]> = mass
            .par_iter()
            .map(|&(t, tri, m)| {
                let g = self.fluid.p1_gradients(t);
                // U_i = int u phi_i, from the exact local mass matrix
                let mut uu = [[0.0; 2]; 3];
                for i in 0..3 {
                    for k in 0..3 {
                        uu[i][0] += m[i][k] * u_prev[tri[k]];
                        uu[i][1] += m[i][k] * u_prev[nv + tri[k]];
                    }
                }
                let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
                let mut local = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in (i + 1)..3 {
                        let v = 0.5 * rho_f * (dot(g[j], uu[i]) - dot(g[i], uu[j]));
                        local[i][j] = v;
                        local[j][i] = -v;
                    }
                }
                local
            })
            .collect();
        let mut trip = TripletList::new(2 * nv, 2 * nv);
        for comp in 0..2 {
            for ((_, tri, _), local) in mass.iter().zip(&locals) {
                for i in 0..3 {
                    for j in 0..3 {
                        if i != j {
                            trip.push(comp * nv + tri[i], comp * nv + tri[j], local[i][j]);
                        }
                    }
                }
            }
        }
        Ok(trip.to_csr())
    }

    /// `A = (rho_f/dt) M_f + K_f(u_prev)`.
    pub fn assemble_fluid_operator(&self, u_prev: &[f64], nu: f64, rho_f: f64, dt: f64) -> Result<CsrMatrix> {
        let mass = self.assemble_fluid_mass();
        let visc = self.assemble_viscous(nu);
        let transport = self.assemble_transport(u_prev, rho_f)?;
        Ok(combine3(&mass, rho_f / dt, &visc, &transport))
    }

    /// `B_{ki} = -(div phi_i, psi_k)` over the `[P1 | P0]` pressure basis.
    pub fn assemble_divergence(&self) -> CsrMatrix {
        let nv = self.fluid.n_vertices();
        let np1 = self.dofs.pressure_p1.n_dofs();
        let mut trip = TripletList::new(self.n_pressure(), 2 * nv);
        for (t, tri) in self.fluid.triangles.iter().enumerate() {
            let area = self.fluid.triangle_area(t);
            let g = self.fluid.p1_gradients(t);
            let parent = self.fluid.parent(t);
            let corners = self.fluid.corners(t);
            let centroid = [
                (corners[0][0] + corners[1][0] + corners[2][0]) / 3.0,
                (corners[0][1] + corners[1][1] + corners[2][1]) / 3.0,
            ];
            let psi = barycentric(&self.fluid.coarse_corners(parent), centroid);
            let ptri = self.fluid.coarse_triangles[parent];
            for c in 0..2 {
                for (a, &v) in tri.iter().enumerate() {
                    let col = c * nv + v;
                    for k in 0..3 {
                        trip.push(ptri[k], col, -g[a][c] * area * psi[k]);
                    }
                    trip.push(np1 + parent, col, -g[a][c] * area);
                }
            }
        }
        trip.to_csr()
    }

    /// Integrals of the pressure basis functions, `[P1 | P0]`.
    pub fn pressure_basis_integrals(&self) -> Vec<f64> {
        let np1 = self.dofs.pressure_p1.n_dofs();
        let mut w = vec![0.0; self.n_pressure()];
        for (t, tri) in self.fluid.coarse_triangles.iter().enumerate() {
            let area = crate::mesh::signed_area(&self.fluid.coarse_corners(t));
            for &v in tri {
                w[v] += area / 3.0;
            }
            w[np1 + t] = area;
        }
        w
    }

    /// Scalar mass and unit stiffness on the structure mesh.
    fn structure_scalar_blocks(&self) -> (CsrMatrix, CsrMatrix) {
        let ns = self.structure.n_nodes();
        let elements = self.structure.elements();
        let mut mass = TripletList::new(ns, ns);
        for q in &self.squad {
            let nodes = elements[q.cell].nodes();
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    mass.push(na, nb, q.weight * (q.values[a] * q.values[b]));
                }
            }
        }
        let mut stiff = TripletList::new(ns, ns);
        for e in elements {
            let g = e.ref_gradients();
            for (a, &na) in e.nodes().iter().enumerate() {
                for (b, &nb) in e.nodes().iter().enumerate() {
                    stiff.push(na, nb, e.measure * (g[a][0] * g[b][0] + g[a][1] * g[b][1]));
                }
            }
        }
        (mass.to_csr(), stiff.to_csr())
    }

    pub fn assemble_structure_blocks(&self, kappa: f64, delta_rho: f64, dt: f64) -> StructureBlocks {
        let (m, d) = self.structure_scalar_blocks();
        let mass = vector_block(&m);
        let stiffness = vector_block(&d).scaled(kappa);
        let operator = if delta_rho == 0.0 {
            stiffness.clone()
        } else {
            mass.combine(delta_rho / (dt * dt), &stiffness, 1.0)
        };
        StructureBlocks {
            mass,
            stiffness,
            operator,
        }
    }

    /// `L_s`, with `(L_s)_{lj} = c2(zeta_l, chi_j)`.
    pub fn assemble_coupling_structure(&self, form: CouplingForm) -> CsrMatrix {
        let (m, d) = self.structure_scalar_blocks();
        match form {
            CouplingForm::L2Pairing => vector_block(&m),
            CouplingForm::H1Product => vector_block(&m.combine(1.0, &d, 1.0)),
        }
    }

    /// Lumped (row-sum) structure mass per multiplier dof.
    pub fn lumped_structure_mass(&self) -> Vec<f64> {
        let (m, _) = self.structure_scalar_blocks();
        let rows = m.row_sums();
        rows.iter().chain(rows.iter()).copied().collect()
    }

    /// Evaluates the structure map and the fluid basis at every structure
    /// quadrature point. Cells are processed in parallel; results keep cell
    /// order.
    fn map_quadrature(&self, x: &[f64]) -> Result<Vec<MappedPoint>> {
        let ns = self.structure.n_nodes();
        if x.len() != 2 * ns {
            return Err(Error::invalid(format!(
                "structure vector has {} entries, expected {}",
                x.len(),
                2 * ns
            )));
        }
        let elements = self.structure.elements();
        self.squad
            .par_iter()
            .map(|q| {
                let e = &elements[q.cell];
                let g = e.ref_gradients();
                let mut pos = [0.0; 2];
                let mut f = [[0.0; 2]; 2];
                for (a, &node) in e.nodes().iter().enumerate() {
                    let xa = [x[node], x[ns + node]];
                    for c in 0..2 {
                        pos[c] += q.values[a] * xa[c];
                        for al in 0..2 {
                            f[c][al] += xa[c] * g[a][al];
                        }
                    }
                }
                let loc = self.fluid.locate_point(pos)?;
                Ok(MappedPoint {
                    fine_triangle: loc.triangle_index,
                    phi: loc.barycentric,
                    grad_phi: self.fluid.p1_gradients(loc.triangle_index),
                    f,
                })
            })
            .collect()
    }

    /// `L_f(X)`, with `(L_f)_{lj} = c1(zeta_l, phi_j(X))`.
    pub fn assemble_coupling_fluid(&self, x: &[f64], form: CouplingForm) -> Result<CsrMatrix> {
        let mapped = self.map_quadrature(x)?;
        let nv = self.fluid.n_vertices();
        let ns = self.structure.n_nodes();
        let elements = self.structure.elements();
        let mut trip = TripletList::new(2 * ns, 2 * nv);
        for comp in 0..2 {
            for (q, mp) in self.squad.iter().zip(&mapped) {
                let e = &elements[q.cell];
                let g = e.ref_gradients();
                let tri = self.fluid.triangles[mp.fine_triangle];
                for (a, &node) in e.nodes().iter().enumerate() {
                    for k in 0..3 {
                        let mut v = q.values[a] * mp.phi[k];
                        if form == CouplingForm::H1Product {
                            // grad_s [phi(X)] = F^T grad phi
                            let gp = mp.grad_phi[k];
                            let chain = [
                                mp.f[0][0] * gp[0] + mp.f[1][0] * gp[1],
                                mp.f[0][1] * gp[0] + mp.f[1][1] * gp[1],
                            ];
                            v += g[a][0] * chain[0] + g[a][1] * chain[1];
                        }
                        trip.push(comp * ns + node, comp * nv + tri[k], q.weight * v);
                    }
                }
            }
        }
        Ok(trip.to_csr())
    }

    /// FE-IBM elastic force `F_i = -kappa (grad_s X, grad_s[phi_i(X)])_B`.
    pub fn assemble_feibm_force(&self, x: &[f64], kappa: f64) -> Result<Vec<f64>> {
        let mapped = self.map_quadrature(x)?;
        let nv = self.fluid.n_vertices();
        let mut force = vec![0.0; 2 * nv];
        for (q, mp) in self.squad.iter().zip(&mapped) {
            let tri = self.fluid.triangles[mp.fine_triangle];
            let f = mp.f;
            for k in 0..3 {
                let gp = mp.grad_phi[k];
                // F F^T grad phi
                let ftg = [f[0][0] * gp[0] + f[1][0] * gp[1], f[0][1] * gp[0] + f[1][1] * gp[1]];
                for c in 0..2 {
                    let val = f[c][0] * ftg[0] + f[c][1] * ftg[1];
                    force[c * nv + tri[k]] -= kappa * q.weight * val;
                }
            }
        }
        Ok(force)
    }

    /// FE-IBM added mass `(M_B)_{ij} = (phi_j(X), phi_i(X))_B`.
    pub fn assemble_feibm_added_mass(&self, x: &[f64]) -> Result<CsrMatrix> {
        let mapped = self.map_quadrature(x)?;
        let nv = self.fluid.n_vertices();
        let mut trip = TripletList::new(2 * nv, 2 * nv);
        for comp in 0..2 {
            for (q, mp) in self.squad.iter().zip(&mapped) {
                let tri = self.fluid.triangles[mp.fine_triangle];
                for a in 0..3 {
                    for b in 0..3 {
                        trip.push(comp * nv + tri[a], comp * nv + tri[b], q.weight * (mp.phi[a] * mp.phi[b]));
                    }
                }
            }
        }
        Ok(trip.to_csr())
    }
}

fn structure_quadrature(structure: &StructureMesh) -> Result<Vec<StructureQuadPoint>> {
    let family = match structure.kind {
        StructureKind::Curve => ElementFamily::P1Segment,
        StructureKind::Area => ElementFamily::P1Triangle,
    };
    let rule = quadrature(family, STRUCTURE_QUADRATURE_DEGREE)?;
    // reference weights sum to 1 (segment) or 1/2 (triangle)
    let scale = match structure.kind {
        StructureKind::Curve => 1.0,
        StructureKind::Area => 2.0,
    };
    let mut out = Vec::with_capacity(structure.n_cells() * rule.points.len());
    for (cell, e) in structure.elements().iter().enumerate() {
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let values = match structure.kind {
                StructureKind::Curve => [1.0 - p[0], p[0], 0.0],
                StructureKind::Area => [1.0 - p[0] - p[1], p[0], p[1]],
            };
            out.push(StructureQuadPoint {
                cell,
                values,
                weight: scale * w * e.measure,
            });
        }
    }
    Ok(out)
}

/// Two-component block-diagonal copy of a scalar matrix.
pub fn vector_block(scalar: &CsrMatrix) -> CsrMatrix {
    let (r, c) = (scalar.nrows(), scalar.ncols());
    let mut t = TripletList::new(2 * r, 2 * c);
    t.push_block(0, 0, scalar, 1.0);
    t.push_block(r, c, scalar, 1.0);
    t.to_csr()
}

fn combine3(a: &CsrMatrix, sa: f64, b: &CsrMatrix, c: &CsrMatrix) -> CsrMatrix {
    let mut t = TripletList::new(a.nrows(), a.ncols());
    t.push_block(0, 0, a, sa);
    t.push_block(0, 0, b, 1.0);
    t.push_block(0, 0, c, 1.0);
    t.to_csr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structure_curve, build_unit_square_mesh, StructureShape};

    fn disc(n: usize, ns: usize) -> Discretization {
        let fluid = build_unit_square_mesh(n).unwrap();
        let s = build_structure_curve(
            StructureShape::Ellipse {
                a: 0.3,
                b: 0.2,
                center: [0.5, 0.5],
            },
            ns,
        )
        .unwrap();
        Discretization::new(fluid, s, BoundarySpec::walls()).unwrap()
    }

    #[test]
    fn fluid_mass_totals_domain_area() {
        let d = disc(4, 16);
        let m = d.assemble_fluid_mass();
        let nv = d.fluid.n_vertices();
        let total: f64 = m.row_sums()[..nv].iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn transport_is_skew() {
        let d = disc(3, 16);
        let u: Vec<f64> = (0..d.n_velocity()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let t = d.assemble_transport(&u, 1.3).unwrap();
        for (i, j, v) in t.iter() {
            assert_eq!(v, -t.get(j, i));
        }
    }

    #[test]
    fn non_finite_transport_velocity_rejected() {
        let d = disc(2, 8);
        let mut u = vec![0.0; d.n_velocity()];
        u[3] = f64::NAN;
        assert!(d.assemble_transport(&u, 1.0).is_err());
    }

    #[test]
    fn structure_blocks_without_density_excess() {
        let d = disc(2, 12);
        let b = d.assemble_structure_blocks(5.0, 0.0, 0.1);
        assert_eq!(b.operator, b.stiffness);
        let l2 = d.assemble_coupling_structure(CouplingForm::L2Pairing);
        assert_eq!(l2, b.mass);
    }

    #[test]
    fn escaped_structure_is_reported() {
        let d = disc(2, 8);
        let mut x = d.positions_to_dofs(&d.structure.placement);
        x[0] = 1.5;
        let err = d.assemble_coupling_fluid(&x, CouplingForm::L2Pairing).unwrap_err();
        assert!(err.is_structure_escape());
    }
}
