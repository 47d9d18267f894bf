//! Every assembled block against a dense, element-by-element oracle on a
//! 32-triangle fluid mesh. The oracles use their own quadrature, hat
//! functions and point location.

use dlm_ibm::assembly::{CouplingForm, Discretization};
use dlm_ibm::mesh::{
    build_structure_area, build_structure_curve, build_unit_square_mesh, BoundarySpec, Point, StructureCells,
    StructureShape,
};
use dlm_ibm::solver::{build_dlm_system, DlmBlocks};
use dlm_ibm::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

const TOL: f64 = 1e-13;

fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.iter() {
        d[(i, j)] += v;
    }
    d
}

fn assert_close(name: &str, got: &DMatrix<f64>, want: &DMatrix<f64>) {
    assert_eq!(got.shape(), want.shape(), "{name}: shape");
    let diff = (got - want).abs().max();
    assert!(diff < TOL, "{name}: max entry difference {diff:e}");
}

/// Collapsed Gauss-Legendre rule on the reference triangle, exact to degree 4.
fn triangle_points() -> Vec<([f64; 2], f64)> {
    let g = gl3();
    let mut out = Vec::new();
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            out.push(([u, v * (1.0 - u)], wu * wv * (1.0 - u)));
        }
    }
    out
}

/// Three-point Gauss-Legendre on [0, 1].
fn gl3() -> [(f64, f64); 3] {
    let r = (0.6f64).sqrt();
    [
        (0.5 * (1.0 - r), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 * (1.0 + r), 5.0 / 18.0),
    ]
}

/// Barycentric coordinates and their (constant) gradients.
fn hat(p: [Point; 3], x: Point) -> ([f64; 3], [[f64; 2]; 3]) {
    let m = Matrix3::new(p[0][0], p[1][0], p[2][0], p[0][1], p[1][1], p[2][1], 1.0, 1.0, 1.0);
    let inv = m.try_inverse().expect("degenerate triangle");
    let lam = inv * Vector3::new(x[0], x[1], 1.0);
    let grads = [0, 1, 2].map(|a| [inv[(a, 0)], inv[(a, 1)]]);
    ([lam[0], lam[1], lam[2]], grads)
}

fn map_ref(p: [Point; 3], r: [f64; 2]) -> Point {
    let l = [1.0 - r[0] - r[1], r[0], r[1]];
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

fn area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs()
}

fn fluid_triangle(d: &Discretization, t: usize) -> [Point; 3] {
    d.fluid.triangles[t].map(|v| d.fluid.vertices[v])
}

/// First fine triangle containing `x`, by exhaustive search.
fn brute_locate(d: &Discretization, x: Point) -> (usize, [f64; 3], [[f64; 2]; 3]) {
    for t in 0..d.fluid.triangles.len() {
        let (lam, g) = hat(fluid_triangle(d, t), x);
        if lam.iter().all(|&l| l >= -1e-12) {
            return (t, lam, g);
        }
    }
    panic!("point {x:?} outside the mesh");
}

fn curve_disc() -> Discretization {
    let fluid = build_unit_square_mesh(2).unwrap();
    assert_eq!(fluid.triangles.len(), 32);
    let s = build_structure_curve(
        StructureShape::Ellipse {
            a: 0.3,
            b: 0.2,
            center: [0.45, 0.52],
        },
        9,
    )
    .unwrap();
    Discretization::new(fluid, s, BoundarySpec::walls()).unwrap()
}

fn area_disc() -> Discretization {
    let fluid = build_unit_square_mesh(2).unwrap();
    let s = build_structure_area(
        StructureShape::Ellipse {
            a: 0.3,
            b: 0.3,
            center: [0.5, 0.5],
        },
        0.2,
    )
    .unwrap();
    Discretization::new(fluid, s, BoundarySpec::walls()).unwrap()
}

fn velocity_field(d: &Discretization) -> Vec<f64> {
    let nv = d.fluid.n_vertices();
    let mut u = vec![0.0; 2 * nv];
    for (k, v) in d.fluid.vertices.iter().enumerate() {
        u[k] = (3.0 * v[0]).sin() + v[1] * v[1];
        u[nv + k] = v[0] * v[1] - (2.0 * v[1]).cos();
    }
    u
}

/// Structure positions displaced from the placement so blocks are exercised
/// away from the reference configuration.
fn deformed(d: &Discretization) -> Vec<f64> {
    let pts: Vec<Point> = d
        .structure
        .placement
        .iter()
        .map(|p| [p[0] + 0.03 * (7.0 * p[1]).sin(), p[1] - 0.02 * (5.0 * p[0]).cos()])
        .collect();
    d.positions_to_dofs(&pts)
}

fn oracle_fluid_blocks(d: &Discretization, u: &[f64], nu: f64, rho: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let nv = d.fluid.n_vertices();
    let mut mass = DMatrix::zeros(2 * nv, 2 * nv);
    let mut visc = DMatrix::zeros(2 * nv, 2 * nv);
    let mut trans = DMatrix::zeros(2 * nv, 2 * nv);
    for t in 0..d.fluid.triangles.len() {
        let p = fluid_triangle(d, t);
        let tri = d.fluid.triangles[t];
        let jac = 2.0 * area(p);
        for (r, w) in triangle_points() {
            let x = map_ref(p, r);
            let (lam, g) = hat(p, x);
            let uq = [0, 1].map(|c| (0..3).map(|k| lam[k] * u[c * nv + tri[k]]).sum::<f64>());
            for a in 0..3 {
                for b in 0..3 {
                    let mm = w * jac * lam[a] * lam[b];
                    let adv_b = uq[0] * g[b][0] + uq[1] * g[b][1];
                    let adv_a = uq[0] * g[a][0] + uq[1] * g[a][1];
                    let tt = 0.5 * rho * w * jac * (adv_b * lam[a] - adv_a * lam[b]);
                    for c in 0..2 {
                        mass[(c * nv + tri[a], c * nv + tri[b])] += mm;
                        trans[(c * nv + tri[a], c * nv + tri[b])] += tt;
                    }
                }
            }
            // symmetric-gradient form on vector basis e_c phi_a
            let sym = |c: usize, a: usize| {
                let mut gm = nalgebra::Matrix2::zeros();
                gm[(c, 0)] = g[a][0];
                gm[(c, 1)] = g[a][1];
                gm + gm.transpose()
            };
            for ci in 0..2 {
                for a in 0..3 {
                    for cj in 0..2 {
                        for b in 0..3 {
                            let v = sym(ci, a).component_mul(&sym(cj, b)).sum();
                            visc[(ci * nv + tri[a], cj * nv + tri[b])] += nu * w * jac * v;
                        }
                    }
                }
            }
        }
    }
    (mass, visc, trans)
}

#[test]
pub fn fluid_mass_viscous_transport() {
    let d = curve_disc();
    let u = velocity_field(&d);
    let (m, v, t) = oracle_fluid_blocks(&d, &u, 0.7, 1.3);
    assert_close("M_f", &dense(&d.assemble_fluid_mass()), &m);
    assert_close("viscous", &dense(&d.assemble_viscous(0.7)), &v);
    assert_close("transport", &dense(&d.assemble_transport(&u, 1.3).unwrap()), &t);
    let a = d.assemble_fluid_operator(&u, 0.7, 1.3, 0.1).unwrap();
    assert_close("fluid operator", &dense(&a), &(m * 13.0 + v + t));
}

#[test]
pub fn divergence_over_enriched_pressure() {
    let d = curve_disc();
    let f = &d.fluid;
    let nv = f.n_vertices();
    let np1 = f.n_coarse_vertices();
    let nc = f.coarse_triangles.len();
    let coarse: Vec<[Point; 3]> = f
        .coarse_triangles
        .iter()
        .map(|ct| ct.map(|k| f.vertices[f.coarse_vertices[k]]))
        .collect();
    let mut b = DMatrix::zeros(np1 + nc, 2 * nv);
    for t in 0..f.triangles.len() {
        let p = fluid_triangle(&d, t);
        let tri = f.triangles[t];
        let jac = 2.0 * area(p);
        for (r, w) in triangle_points() {
            let x = map_ref(p, r);
            let (_, g) = hat(p, x);
            let (ci, psi) = coarse
                .iter()
                .enumerate()
                .find_map(|(c, cp)| {
                    let (l, _) = hat(*cp, x);
                    l.iter().all(|&v| v >= -1e-12).then_some((c, l))
                })
                .unwrap();
            for a in 0..3 {
                for c in 0..2 {
                    let col = c * nv + tri[a];
                    for k in 0..3 {
                        b[(f.coarse_triangles[ci][k], col)] -= w * jac * g[a][c] * psi[k];
                    }
                    b[(np1 + ci, col)] -= w * jac * g[a][c];
                }
            }
        }
    }
    assert_close("B", &dense(&d.assemble_divergence()), &b);
    let integrals = d.pressure_basis_integrals();
    let total: f64 = integrals[np1..].iter().sum();
    assert!((total - 1.0).abs() < TOL);
    let total_p1: f64 = integrals[..np1].iter().sum();
    assert!((total_p1 - 1.0).abs() < TOL);
}

#[test]
pub fn curve_structure_blocks_are_circulant() {
    let d = curve_disc();
    let ns = d.structure.n_nodes();
    let h = 2.0 * std::f64::consts::PI / ns as f64;
    let StructureCells::Segments(segs) = &d.structure.cells else {
        panic!("expected a curve")
    };
    let (kappa, drho, dt) = (2.5, 0.3, 0.05);
    let mut m = DMatrix::zeros(2 * ns, 2 * ns);
    let mut k = DMatrix::zeros(2 * ns, 2 * ns);
    for s in segs {
        for c in 0..2 {
            for (i, &a) in s.iter().enumerate() {
                for (j, &b) in s.iter().enumerate() {
                    let same = i == j;
                    m[(c * ns + a, c * ns + b)] += h / 6.0 * if same { 2.0 } else { 1.0 };
                    k[(c * ns + a, c * ns + b)] += kappa / h * if same { 1.0 } else { -1.0 };
                }
            }
        }
    }
    let blocks = d.assemble_structure_blocks(kappa, drho, dt);
    assert_close("M_s", &dense(&blocks.mass), &m);
    assert_close("K_s", &dense(&blocks.stiffness), &k);
    assert_close("A_s", &dense(&blocks.operator), &(&m * (drho / (dt * dt)) + &k));
    assert_close("L_s l2", &dense(&d.assemble_coupling_structure(CouplingForm::L2Pairing)), &m);
    assert_close(
        "L_s h1",
        &dense(&d.assemble_coupling_structure(CouplingForm::H1Product)),
        &(&m + &k / kappa),
    );
}

#[test]
pub fn area_structure_blocks() {
    let d = area_disc();
    let ns = d.structure.n_nodes();
    let StructureCells::Triangles(tris) = &d.structure.cells else {
        panic!("expected an area")
    };
    let mut m = DMatrix::zeros(2 * ns, 2 * ns);
    let mut k = DMatrix::zeros(2 * ns, 2 * ns);
    for tri in tris {
        let p = tri.map(|i| d.structure.ref_nodes[i]);
        let jac = 2.0 * area(p);
        for (r, w) in triangle_points() {
            let (lam, g) = hat(p, map_ref(p, r));
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..2 {
                        m[(c * ns + tri[a], c * ns + tri[b])] += w * jac * lam[a] * lam[b];
                        k[(c * ns + tri[a], c * ns + tri[b])] +=
                            w * jac * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    }
                }
            }
        }
    }
    let blocks = d.assemble_structure_blocks(1.0, 0.0, 0.1);
    assert_close("M_s area", &dense(&blocks.mass), &m);
    assert_close("K_s area", &dense(&blocks.stiffness), &k);
}

/// Coupling and FE-IBM blocks on a curve with the three-point Gauss rule,
/// locating every quadrature point by exhaustive search.
#[test]
pub fn curve_coupling_and_feibm_blocks() {
    let d = curve_disc();
    let x = deformed(&d);
    let ns = d.structure.n_nodes();
    let nv = d.fluid.n_vertices();
    let h = 2.0 * std::f64::consts::PI / ns as f64;
    let StructureCells::Segments(segs) = &d.structure.cells else {
        panic!("expected a curve")
    };
    let kappa = 3.0;
    let mut l2 = DMatrix::zeros(2 * ns, 2 * nv);
    let mut h1 = DMatrix::zeros(2 * ns, 2 * nv);
    let mut force = DVector::zeros(2 * nv);
    let mut added = DMatrix::zeros(2 * nv, 2 * nv);
    for s in segs {
        let xa = [x[s[0]], x[ns + s[0]]];
        let xb = [x[s[1]], x[ns + s[1]]];
        let xs = [(xb[0] - xa[0]) / h, (xb[1] - xa[1]) / h];
        for (xi, w) in gl3() {
            let pos = [(1.0 - xi) * xa[0] + xi * xb[0], (1.0 - xi) * xa[1] + xi * xb[1]];
            let (t, phi, g) = brute_locate(&d, pos);
            let tri = d.fluid.triangles[t];
            let zeta = [1.0 - xi, xi];
            let dzeta = [-1.0 / h, 1.0 / h];
            for c in 0..2 {
                for (a, &node) in s.iter().enumerate() {
                    for k in 0..3 {
                        let base = w * h * zeta[a] * phi[k];
                        let chain = g[k][0] * xs[0] + g[k][1] * xs[1];
                        l2[(c * ns + node, c * nv + tri[k])] += base;
                        h1[(c * ns + node, c * nv + tri[k])] += base + w * h * dzeta[a] * chain;
                    }
                }
                for k in 0..3 {
                    let chain = g[k][0] * xs[0] + g[k][1] * xs[1];
                    force[c * nv + tri[k]] -= kappa * w * h * xs[c] * chain;
                    for b in 0..3 {
                        added[(c * nv + tri[k], c * nv + tri[b])] += w * h * phi[k] * phi[b];
                    }
                }
            }
        }
    }
    assert_close("L_f l2", &dense(&d.assemble_coupling_fluid(&x, CouplingForm::L2Pairing).unwrap()), &l2);
    assert_close("L_f h1", &dense(&d.assemble_coupling_fluid(&x, CouplingForm::H1Product).unwrap()), &h1);
    let f = DVector::from_vec(d.assemble_feibm_force(&x, kappa).unwrap());
    let diff = (f - force).abs().max();
    assert!(diff < TOL, "FE-IBM force differs by {diff:e}");
    assert_close("M_B", &dense(&d.assemble_feibm_added_mass(&x).unwrap()), &added);
}

/// Radon's seven-point rule on the reference triangle (weights sum to 1/2).
fn radon7() -> Vec<([f64; 2], f64)> {
    let r = 15f64.sqrt();
    let (a, b) = ((6.0 - r) / 21.0, (6.0 + r) / 21.0);
    let (wa, wb) = ((155.0 - r) / 2400.0, (155.0 + r) / 2400.0);
    vec![
        ([1.0 / 3.0, 1.0 / 3.0], 9.0 / 80.0),
        ([a, a], wa),
        ([1.0 - 2.0 * a, a], wa),
        ([a, 1.0 - 2.0 * a], wa),
        ([b, b], wb),
        ([1.0 - 2.0 * b, b], wb),
        ([b, 1.0 - 2.0 * b], wb),
    ]
}

#[test]
pub fn area_coupling_block() {
    let d = area_disc();
    let x = deformed(&d);
    let ns = d.structure.n_nodes();
    let nv = d.fluid.n_vertices();
    let StructureCells::Triangles(tris) = &d.structure.cells else {
        panic!("expected an area")
    };
    let mut l2 = DMatrix::zeros(2 * ns, 2 * nv);
    for tri in tris {
        let refp = tri.map(|i| d.structure.ref_nodes[i]);
        let cur = tri.map(|i| [x[i], x[ns + i]]);
        let jac = 2.0 * area(refp);
        for (r, w) in radon7() {
            let zeta = [1.0 - r[0] - r[1], r[0], r[1]];
            let (t, phi, _) = brute_locate(&d, map_ref(cur, r));
            let ftri = d.fluid.triangles[t];
            for c in 0..2 {
                for a in 0..3 {
                    for k in 0..3 {
                        l2[(c * ns + tri[a], c * nv + ftri[k])] += w * jac * zeta[a] * phi[k];
                    }
                }
            }
        }
    }
    assert_close("L_f area", &dense(&d.assemble_coupling_fluid(&x, CouplingForm::L2Pairing).unwrap()), &l2);
}

#[test]
pub fn dlm_block_layout() {
    let d = curve_disc();
    let u = velocity_field(&d);
    let x = deformed(&d);
    let dt = 0.1;
    let a = d.assemble_fluid_operator(&u, 1.0, 1.0, dt).unwrap();
    let b = d.assemble_divergence();
    let sb = d.assemble_structure_blocks(5.0, 0.3, dt);
    let lf = d.assemble_coupling_fluid(&x, CouplingForm::L2Pairing).unwrap();
    let ls = d.assemble_coupling_structure(CouplingForm::L2Pairing);
    let (nu, np, nx, nl) = (a.nrows(), b.nrows(), sb.operator.nrows(), ls.nrows());
    let f: Vec<f64> = (0..nu).map(|i| i as f64 * 0.01).collect();
    let g: Vec<f64> = (0..nx).map(|i| 1.0 - i as f64 * 0.02).collect();
    let dd: Vec<f64> = (0..nl).map(|i| (i as f64).sin()).collect();
    let sys = build_dlm_system(&DlmBlocks {
        fluid_operator: &a,
        divergence: &b,
        structure_operator: &sb.operator,
        coupling_fluid: &lf,
        coupling_structure: &ls,
        f: &f,
        g: &g,
        d: &dd,
        dt,
    });
    let n = nu + np + nx + nl;
    let mut want = DMatrix::zeros(n, n);
    let (pu, pp, px, pl) = (0, nu, nu + np, nu + np + nx);
    want.view_mut((pu, pu), (nu, nu)).copy_from(&dense(&a));
    want.view_mut((pu, pp), (nu, np)).copy_from(&dense(&b).transpose());
    want.view_mut((pu, pl), (nu, nl)).copy_from(&dense(&lf).transpose());
    want.view_mut((pp, pu), (np, nu)).copy_from(&dense(&b));
    want.view_mut((px, px), (nx, nx)).copy_from(&dense(&sb.operator));
    want.view_mut((px, pl), (nx, nl)).copy_from(&(-dense(&ls).transpose()));
    want.view_mut((pl, pu), (nl, nu)).copy_from(&(dense(&lf) * dt));
    want.view_mut((pl, px), (nl, nx)).copy_from(&(-dense(&ls)));
    assert_close("DLM matrix", &dense(&sys.matrix), &want);
    let mut rhs = f.clone();
    rhs.extend(std::iter::repeat(0.0).take(np));
    rhs.extend(&g);
    rhs.extend(dd.iter().map(|v| dt * v));
    assert_eq!(sys.rhs, rhs);
}
