//! Global block systems and their solution.
//!
//! Unknowns are ordered `(u, p, X, lambda, gauge)`. The kinematic constraint
//! row is stored multiplied by `dt`:
//!
//! ```text
//! [ A        B^T   0      L_f^T ] [u]   [ f            ]
//! [ B        0     0      0     ] [p] = [ 0            ]
//! [ 0        0     A_s   -L_s^T ] [X]   [ g            ]
//! [ dt L_f   0    -L_s    0     ] [l]   [ -L_s X^n     ]
//! ```

use std::time::Instant;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::DofMap;
use crate::sparse::{norm2, CsrMatrix, TripletList};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockOffsets {
    pub u: usize,
    pub p: usize,
    pub x: usize,
    pub lambda: usize,
    pub gauge: usize,
    pub total: usize,
}

impl BlockOffsets {
    fn new(nu: usize, np: usize, nx: usize, nl: usize, ng: usize) -> Self {
        Self {
            u: 0,
            p: nu,
            x: nu + np,
            lambda: nu + np + nx,
            gauge: nu + np + nx + nl,
            total: nu + np + nx + nl + ng,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub offsets: BlockOffsets,
}

/// Solution vector split back into its blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gauge: Vec<f64>,
}

impl BlockSystem {
    pub fn dim(&self) -> usize {
        self.offsets.total
    }

    pub fn split(&self, z: &[f64]) -> BlockSolution {
        let o = &self.offsets;
        BlockSolution {
            u: z[o.u..o.p].to_vec(),
            p: z[o.p..o.x].to_vec(),
            x: z[o.x..o.lambda].to_vec(),
            lambda: z[o.lambda..o.gauge].to_vec(),
            gauge: z[o.gauge..o.total].to_vec(),
        }
    }

    pub fn residual(&self, z: &[f64]) -> Vec<f64> {
        let az = self.matrix.mul_vec(z);
        az.iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }

    /// Normwise backward error `|r|_inf / (|A|_inf |z|_inf + |b|_inf)`.
    pub fn backward_error(&self, z: &[f64]) -> f64 {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let a_inf = (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let denom = a_inf * inf(z) + inf(&self.rhs);
        let r = inf(&self.residual(z));
        if denom > 0.0 {
            r / denom
        } else {
            r
        }
    }

    pub fn relative_residual(&self, z: &[f64]) -> f64 {
        let r = norm2(&self.residual(z));
        let b = norm2(&self.rhs);
        if b > 0.0 {
            r / b
        } else {
            r
        }
    }
}

/// Blocks of one DLM step. `l_f` is evaluated at the lagged structure map.
pub struct DlmBlocks<'a> {
    pub fluid_operator: &'a CsrMatrix,
    pub divergence: &'a CsrMatrix,
    pub structure_operator: &'a CsrMatrix,
    pub coupling_fluid: &'a CsrMatrix,
    pub coupling_structure: &'a CsrMatrix,
    pub f: &'a [f64],
    pub g: &'a [f64],
    /// `d = -(1/dt) L_s X^n`.
    pub d: &'a [f64],
    pub dt: f64,
}

pub fn build_dlm_system(blocks: &DlmBlocks) -> BlockSystem {
    let nu = blocks.fluid_operator.nrows();
    let np = blocks.divergence.nrows();
    let nx = blocks.structure_operator.nrows();
    let nl = blocks.coupling_structure.nrows();
    assert_eq!(blocks.divergence.ncols(), nu);
    assert_eq!(blocks.coupling_fluid.nrows(), nl);
    assert_eq!(blocks.coupling_fluid.ncols(), nu);
    assert_eq!(blocks.coupling_structure.ncols(), nx);
    assert_eq!((blocks.f.len(), blocks.g.len(), blocks.d.len()), (nu, nx, nl));
    let o = BlockOffsets::new(nu, np, nx, nl, 0);

    let mut t = TripletList::new(o.total, o.total);
    t.push_block(o.u, o.u, blocks.fluid_operator, 1.0);
    t.push_block_transposed(o.u, o.p, blocks.divergence, 1.0);
    t.push_block_transposed(o.u, o.lambda, blocks.coupling_fluid, 1.0);
    t.push_block(o.p, o.u, blocks.divergence, 1.0);
    t.push_block(o.x, o.x, blocks.structure_operator, 1.0);
    t.push_block_transposed(o.x, o.lambda, blocks.coupling_structure, -1.0);
    t.push_block(o.lambda, o.u, blocks.coupling_fluid, blocks.dt);
    t.push_block(o.lambda, o.x, blocks.coupling_structure, -1.0);

    let mut rhs = vec![0.0; o.total];
    rhs[o.u..o.p].copy_from_slice(blocks.f);
    rhs[o.x..o.lambda].copy_from_slice(blocks.g);
    for (r, d) in rhs[o.lambda..o.gauge].iter_mut().zip(blocks.d) {
        *r = blocks.dt * d;
    }
    BlockSystem {
        matrix: t.to_csr(),
        rhs,
        offsets: o,
    }
}

/// Saddle-point Stokes/Oseen system `[A B^T; B 0]` used by the FE-IBM.
pub fn build_stokes_system(fluid_operator: &CsrMatrix, divergence: &CsrMatrix, f: &[f64]) -> BlockSystem {
    let nu = fluid_operator.nrows();
    let np = divergence.nrows();
    let o = BlockOffsets::new(nu, np, 0, 0, 0);
    let mut t = TripletList::new(o.total, o.total);
    t.push_block(0, 0, fluid_operator, 1.0);
    t.push_block_transposed(0, nu, divergence, 1.0);
    t.push_block(nu, 0, divergence, 1.0);
    let mut rhs = vec![0.0; o.total];
    rhs[..nu].copy_from_slice(f);
    BlockSystem {
        matrix: t.to_csr(),
        rhs,
        offsets: o,
    }
}

/// Eliminates constrained velocity dofs (identity rows, zeroed columns, zero
/// data) and appends one bordering row/column per pressure gauge. Each
/// `gauge_weights` entry has pressure-block length and adds the constraint
/// `w^T p = 0`.
pub fn apply_constraints(system: &BlockSystem, velocity: &DofMap, gauge_weights: &[Vec<f64>]) -> BlockSystem {
    let o = system.offsets;
    let mask = velocity.constraint_mask();
    let fixed = |k: usize| k < o.p && mask[k - o.u];
    let ng = gauge_weights.len();
    let total = o.total + ng;
    let mut t = TripletList::new(total, total);
    for (i, j, v) in system.matrix.iter() {
        if !fixed(i) && !fixed(j) {
            t.push(i, j, v);
        }
    }
    for &d in &velocity.constrained {
        t.push(o.u + d, o.u + d, 1.0);
    }
    for (g, w) in gauge_weights.iter().enumerate() {
        assert_eq!(w.len(), o.x - o.p, "gauge weights must span the pressure block");
        let row = o.total + g;
        for (k, &wk) in w.iter().enumerate() {
            if wk != 0.0 {
                t.push(row, o.p + k, wk);
                t.push(o.p + k, row, wk);
            }
        }
    }
    let mut rhs = system.rhs.clone();
    for &d in &velocity.constrained {
        rhs[o.u + d] = 0.0;
    }
    rhs.resize(total, 0.0);
    BlockSystem {
        matrix: t.to_csr(),
        rhs,
        offsets: BlockOffsets { gauge: o.total, total, ..o },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Sparse LU with partial pivoting and fill-reducing ordering.
    DirectLu,
    /// Restarted GMRES without preconditioning.
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub tolerance: f64,
    pub gmres_restart: usize,
    pub gmres_max_iterations: usize,
    /// Fall back to GMRES when the direct solve misses the tolerance.
    pub fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::DirectLu,
            tolerance: 1e-10,
            gmres_restart: 100,
            gmres_max_iterations: 2_000,
            fallback: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: SolverMethod,
    pub relative_residual: f64,
    pub backward_error: f64,
    pub dimension: usize,
    pub nnz: usize,
    pub refinement_steps: usize,
    pub gmres_iterations: usize,
    pub wall_time_s: f64,
}

pub fn solve(system: &BlockSystem, opts: &SolverOptions) -> Result<(Vec<f64>, SolverReport)> {
    let start = Instant::now();
    let n = system.dim();
    if !system.rhs.iter().all(|v| v.is_finite()) || !system.matrix.is_finite() {
        return Err(Error::SolverFailure {
            reason: "system contains non-finite entries".into(),
            residual: f64::NAN,
        });
    }
    let mut report = SolverReport {
        method: opts.method,
        relative_residual: f64::INFINITY,
        backward_error: f64::INFINITY,
        dimension: n,
        nnz: system.matrix.nnz(),
        refinement_steps: 0,
        gmres_iterations: 0,
        wall_time_s: 0.0,
    };
    let mut z = vec![0.0; n];
    let mut failure = String::new();

    if opts.method == SolverMethod::DirectLu {
        match direct_solve(system) {
            Ok((sol, steps)) => {
                report.refinement_steps = steps;
                report.relative_residual = system.relative_residual(&sol);
                report.backward_error = system.backward_error(&sol);
                z = sol;
            }
            Err(msg) => failure = msg,
        }
    }
    // A tiny backward error alone also admits huge vectors that do not
    // reduce the residual (singular systems); require real progress too.
    let converged = |r: &SolverReport| {
        r.backward_error.is_finite() && r.backward_error <= opts.tolerance && r.relative_residual <= opts.tolerance.sqrt()
    };
    if !converged(&report) && (opts.method == SolverMethod::Gmres || opts.fallback) {
        if !z.iter().all(|v| v.is_finite()) {
            z.iter_mut().for_each(|v| *v = 0.0);
        }
        let (sol, iters) = gmres(system, z, opts);
        report.method = SolverMethod::Gmres;
        report.gmres_iterations = iters;
        report.relative_residual = system.relative_residual(&sol);
        report.backward_error = system.backward_error(&sol);
        z = sol;
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    if !converged(&report) {
        if failure.is_empty() {
            failure = format!("residual above tolerance {:e}", opts.tolerance);
        }
        return Err(Error::SolverFailure {
            reason: failure,
            residual: report.relative_residual,
        });
    }
    Ok((z, report))
}

fn to_faer(m: &CsrMatrix, row_scale: &[f64], col_scale: &[f64]) -> std::result::Result<SparseColMat<usize, f64>, String> {
    let triplets: Vec<_> = m
        .iter()
        .map(|(i, j, v)| Triplet::new(i, j, row_scale[i] * v * col_scale[j]))
        .collect();
    SparseColMat::try_new_from_triplets(m.nrows(), m.ncols(), &triplets).map_err(|e| format!("{e:?}"))
}

/// Power-of-two row and column scalings bringing every row and column
/// maximum close to one.
fn equilibrate(m: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let pow2 = |v: f64| if v > 0.0 && v.is_finite() { 2f64.powi(-(v.log2().round() as i32)) } else { 1.0 };
    let mut rmax = vec![0.0f64; m.nrows()];
    for (i, _, v) in m.iter() {
        rmax[i] = rmax[i].max(v.abs());
    }
    let rows: Vec<f64> = rmax.into_iter().map(pow2).collect();
    let mut cmax = vec![0.0f64; m.ncols()];
    for (i, j, v) in m.iter() {
        cmax[j] = cmax[j].max((rows[i] * v).abs());
    }
    let cols = cmax.into_iter().map(pow2).collect();
    (rows, cols)
}

/// Equilibrated sparse LU plus up to three steps of iterative refinement.
fn direct_solve(system: &BlockSystem) -> std::result::Result<(Vec<f64>, usize), String> {
    faer::set_global_parallelism(Par::Seq);
    let n = system.dim();
    let (rs, cs) = equilibrate(&system.matrix);
    let a = to_faer(&system.matrix, &rs, &cs)?;
    // faer panics on an exactly zero pivot instead of returning an error
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| a.sp_lu()))
        .map_err(|_| "sparse LU hit a zero pivot (singular matrix)".to_string())?
        .map_err(|e| format!("sparse LU failed: {e:?}"))?;
    let scaled_solve = |r: &[f64]| -> Vec<f64> {
        let b = Col::<f64>::from_fn(n, |i| rs[i] * r[i]);
        let y = lu.solve(&b);
        (0..n).map(|j| cs[j] * y[j]).collect()
    };
    let mut z = scaled_solve(&system.rhs);
    let mut rel = system.relative_residual(&z);
    if !rel.is_finite() {
        return Err("factorization produced non-finite values (singular matrix?)".into());
    }
    // refine while it pays off, even below the tolerance: fixed-point
    // residual histories are read down to round-off
    let mut steps = 0;
    while steps < 3 && rel > 0.0 {
        let dz = scaled_solve(&system.residual(&z));
        let trial: Vec<f64> = z.iter().zip(&dz).map(|(v, d)| v - d).collect();
        let trial_rel = system.relative_residual(&trial);
        if !(trial_rel < 0.5 * rel) {
            break;
        }
        z = trial;
        rel = trial_rel;
        steps += 1;
    }
    Ok((z, steps))
}

/// Restarted GMRES(m) with modified Gram-Schmidt and Givens rotations.
fn gmres(system: &BlockSystem, mut x: Vec<f64>, opts: &SolverOptions) -> (Vec<f64>, usize) {
    let n = system.dim();
    let bnorm = norm2(&system.rhs).max(f64::MIN_POSITIVE);
    let m = opts.gmres_restart.max(1);
    let mut total = 0;
    while total < opts.gmres_max_iterations {
        let r: Vec<f64> = system.residual(&x).iter().map(|v| -v).collect();
        let beta = norm2(&r);
        if beta / bnorm <= opts.tolerance {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut gvec = vec![0.0; m + 1];
        gvec[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = system.matrix.mul_vec(&basis[k]);
            for (i, v) in basis.iter().enumerate() {
                let hik: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                h[i][k] = hik;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= hik * b);
            }
            let wn = norm2(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let tmp = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = tmp;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if gvec[k + 1].abs() / bnorm <= opts.tolerance || wn == 0.0 || total >= opts.gmres_max_iterations {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        if k_used == 0 {
            break;
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = ((i + 1)..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (gvec[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * basis[j][i];
            }
        }
    }
    (x, total)
}
