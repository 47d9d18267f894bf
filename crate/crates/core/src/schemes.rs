//! Time-stepping schemes: semi-implicit DLM, classical FE-IBM and the DLM
//! fixed-point iteration.

use serde::{Deserialize, Serialize};

use crate::assembly::{CouplingForm, Discretization, StructureBlocks};
use crate::config::{GeometryPreset, PreviousPositionInit, Scheme, SimulationConfig};
use crate::diagnostics::{
    coupling_residual, divergence_residual, enclosed_area, energy_inequality_lhs, total_energy, DiagnosticsRecord,
    EnergyOperators, EnergyParts, RunStatus,
};
use crate::error::{Error, Result};
use crate::mesh::{
    build_square_mesh, build_structure_area, build_structure_curve, curve_nodes_for_spacing, Point, StructureMesh,
    StructureShape,
};
use crate::solver::{
    apply_constraints, build_dlm_system, build_stokes_system, solve, BlockSystem, DlmBlocks, SolverOptions,
    SolverReport,
};
use crate::sparse::{CsrMatrix, TripletList};

/// Unknowns at one time level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: Vec<f64>,
    /// `[P1 part | P0 part]`.
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub lambda: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

/// Builds the structure mesh of a geometry preset.
///
/// Codim-0 presets start from an undeformed reference body of the same area
/// (a disk of radius `sqrt(ab)`, a square of side `sqrt(wh)`) placed in the
/// stretched configuration, so the initial state stores elastic energy.
pub fn build_structure(config: &SimulationConfig) -> Result<StructureMesh> {
    let g = &config.geometry;
    let [a, b] = g.semi_axes;
    let [w, h] = g.rect_size;
    let c = g.center;
    match g.preset {
        GeometryPreset::EllipseCodim1 => build_structure_curve(
            StructureShape::Ellipse { a, b, center: c },
            curve_nodes_for_spacing(config.h_s),
        ),
        GeometryPreset::RectangleCodim1 => build_structure_curve(
            StructureShape::Rectangle {
                width: w,
                height: h,
                center: c,
            },
            curve_nodes_for_spacing(config.h_s),
        ),
        GeometryPreset::EllipseCodim0 => {
            let r = (a * b).sqrt();
            let mesh = build_structure_area(StructureShape::Ellipse { a: r, b: r, center: c }, config.h_s)?;
            let placement = stretch(&mesh.ref_nodes, c, [a / r, b / r]);
            mesh.with_placement(placement)
        }
        GeometryPreset::RectangleCodim0 => {
            let s = (w * h).sqrt();
            let mesh = build_structure_area(
                StructureShape::Rectangle {
                    width: s,
                    height: s,
                    center: c,
                },
                config.h_s,
            )?;
            let placement = stretch(&mesh.ref_nodes, c, [w / s, h / s]);
            mesh.with_placement(placement)
        }
    }
}

fn stretch(nodes: &[Point], c: Point, f: [f64; 2]) -> Vec<Point> {
    nodes
        .iter()
        .map(|p| [c[0] + f[0] * (p[0] - c[0]), c[1] + f[1] * (p[1] - c[1])])
        .collect()
}

pub fn build_discretization(config: &SimulationConfig) -> Result<Discretization> {
    config.validate()?;
    let g = &config.geometry;
    let fluid = build_square_mesh(g.domain_origin, g.domain_side, config.fluid_cells())?;
    let structure = build_structure(config)?;
    if let Some(p) = structure.placement.iter().find(|p| !fluid.contains(**p)) {
        return Err(Error::OutOfDomain { point: *p });
    }
    Discretization::new(fluid, structure, g.bc.spec())
}

/// Result of one fixed-point solve.
#[derive(Clone, Debug)]
pub struct FixedPointOutcome {
    pub state: State,
    /// Coupling residual after each iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Time-independent operators and everything needed to advance a state.
pub struct Simulation {
    pub config: SimulationConfig,
    pub disc: Discretization,
    pub fluid_mass: CsrMatrix,
    pub viscous: CsrMatrix,
    pub divergence: CsrMatrix,
    pub structure: StructureBlocks,
    /// `L_s` for the configured coupling form.
    pub coupling_structure: CsrMatrix,
    pub lumped_mass: Vec<f64>,
    gauge_weights: Vec<Vec<f64>>,
    pressure_integrals: Vec<f64>,
    pub solver: SolverOptions,
    /// Report of the most recent linear solve.
    pub last_solve: Option<SolverReport>,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        let disc = build_discretization(&config)?;
        Self::with_discretization(config, disc)
    }

    pub fn with_discretization(config: SimulationConfig, disc: Discretization) -> Result<Self> {
        config.validate()?;
        let fluid_mass = disc.assemble_fluid_mass();
        let viscous = disc.assemble_viscous(config.nu);
        let divergence = disc.assemble_divergence();
        let structure = disc.assemble_structure_blocks(config.kappa, config.delta_rho, config.dt);
        let form = match config.scheme {
            Scheme::Feibm => CouplingForm::L2Pairing,
            _ => config.coupling_form,
        };
        let coupling_structure = disc.assemble_coupling_structure(form);
        let lumped_mass = disc.lumped_structure_mass();
        let np1 = disc.dofs.pressure_p1.n_dofs();
        let np = disc.n_pressure();
        // Pin one dof of each pressure part; zero means are restored after
        // the solve. Dense mean rows would wreck the fill-reducing ordering.
        let mut p1 = vec![0.0; np];
        p1[0] = 1.0;
        let mut p0 = vec![0.0; np];
        p0[np1] = 1.0;
        let pressure_integrals = disc.pressure_basis_integrals();
        let solver = SolverOptions {
            tolerance: config.tol_lin,
            ..SolverOptions::default()
        };
        Ok(Self {
            config,
            disc,
            fluid_mass,
            viscous,
            divergence,
            structure,
            coupling_structure,
            lumped_mass,
            gauge_weights: vec![p1, p0],
            pressure_integrals,
            solver,
            last_solve: None,
        })
    }

    fn coupling_form(&self) -> CouplingForm {
        match self.config.scheme {
            Scheme::Feibm => CouplingForm::L2Pairing,
            _ => self.config.coupling_form,
        }
    }

    /// Fluid at rest, structure at its preset placement.
    pub fn initialize(&self) -> State {
        let x = self.disc.positions_to_dofs(&self.disc.structure.placement);
        let x_prev = match self.config.x_prev_init {
            PreviousPositionInit::Initial => x.clone(),
            PreviousPositionInit::Zero => vec![0.0; x.len()],
        };
        State {
            u: vec![0.0; self.disc.n_velocity()],
            p: vec![0.0; self.disc.n_pressure()],
            lambda: vec![0.0; self.disc.n_multiplier()],
            x,
            x_prev,
            t: 0.0,
            step: 0,
        }
    }

    pub fn energy(&self, state: &State) -> EnergyParts {
        let ops = EnergyOperators {
            fluid_mass: &self.fluid_mass,
            structure_mass: &self.structure.mass,
            structure_stiffness: &self.structure.stiffness,
            rho_f: self.config.rho_f,
            delta_rho: self.config.delta_rho,
            dt: self.config.dt,
        };
        total_energy(&ops, &state.u, &state.x, &state.x_prev)
    }

    /// `(rho/dt) M_f + K_visc + T(u_prev)`.
    fn fluid_operator(&self, u_prev: &[f64]) -> Result<CsrMatrix> {
        let c = &self.config;
        let transport = self.disc.assemble_transport(u_prev, c.rho_f)?;
        let n = self.fluid_mass.nrows();
        let mut t = TripletList::new(n, n);
        t.push_block(0, 0, &self.fluid_mass, c.rho_f / c.dt);
        t.push_block(0, 0, &self.viscous, 1.0);
        t.push_block(0, 0, &transport, 1.0);
        Ok(t.to_csr())
    }

    fn solve_system(&mut self, system: &BlockSystem) -> Result<Vec<f64>> {
        let constrained = apply_constraints(system, &self.disc.dofs.velocity, &self.gauge_weights);
        let (mut z, report) = solve(&constrained, &self.solver)?;
        self.last_solve = Some(report);
        let o = system.offsets;
        self.remove_pressure_means(&mut z[o.p..o.x]);
        Ok(z)
    }

    /// Shifts the P1 and P0 pressure parts to zero mean each.
    pub fn remove_pressure_means(&self, p: &mut [f64]) {
        let np1 = self.disc.dofs.pressure_p1.n_dofs();
        let w = &self.pressure_integrals;
        for range in [0..np1, np1..p.len()] {
            let area: f64 = w[range.clone()].iter().sum();
            let mean = p[range.clone()].iter().zip(&w[range.clone()]).map(|(a, b)| a * b).sum::<f64>() / area;
            p[range].iter_mut().for_each(|v| *v -= mean);
        }
    }

    /// Right-hand sides `f`, `g`, `d` of the DLM system at `state`.
    fn dlm_rhs(&self, state: &State) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let c = &self.config;
        let f = self.fluid_mass.mul_vec(&state.u).iter().map(|v| v * c.rho_f / c.dt).collect();
        let g = if c.delta_rho == 0.0 {
            vec![0.0; state.x.len()]
        } else {
            let w: Vec<f64> = state.x.iter().zip(&state.x_prev).map(|(a, b)| 2.0 * a - b).collect();
            let s = c.delta_rho / (c.dt * c.dt);
            self.structure.mass.mul_vec(&w).iter().map(|v| v * s).collect()
        };
        let d = self.coupling_structure.mul_vec(&state.x).iter().map(|v| -v / c.dt).collect();
        (f, g, d)
    }

    fn dlm_solve(&mut self, state: &State, fluid_operator: &CsrMatrix, coupling_fluid: &CsrMatrix) -> Result<State> {
        let (f, g, d) = self.dlm_rhs(state);
        let blocks = DlmBlocks {
            fluid_operator,
            divergence: &self.divergence,
            structure_operator: &self.structure.operator,
            coupling_fluid,
            coupling_structure: &self.coupling_structure,
            f: &f,
            g: &g,
            d: &d,
            dt: self.config.dt,
        };
        let system = build_dlm_system(&blocks);
        let z = self.solve_system(&system)?;
        let sol = system.split(&z);
        Ok(State {
            u: sol.u,
            p: sol.p,
            x: sol.x,
            x_prev: state.x.clone(),
            lambda: sol.lambda,
            t: (state.step + 1) as f64 * self.config.dt,
            step: state.step + 1,
        })
    }

    /// One semi-implicit DLM step: `L_f` at `X^n`, transport linearized at `u^n`.
    pub fn dlm_step(&mut self, state: &State) -> Result<State> {
        let a = self.fluid_operator(&state.u)?;
        let lf = self.disc.assemble_coupling_fluid(&state.x, self.coupling_form())?;
        self.dlm_solve(state, &a, &lf)
    }

    /// One FE-IBM step: explicit elastic force, fluid solve with added mass,
    /// pointwise structure update `X_i += dt u(X_i)`.
    pub fn feibm_step(&mut self, state: &State) -> Result<State> {
        let c = self.config.clone();
        let force = self.disc.assemble_feibm_force(&state.x, c.kappa)?;
        let mut a = self.fluid_operator(&state.u)?;
        let mut rhs: Vec<f64> = self.fluid_mass.mul_vec(&state.u).iter().map(|v| v * c.rho_f / c.dt).collect();
        for (r, f) in rhs.iter_mut().zip(&force) {
            *r += f;
        }
        if c.delta_rho > 0.0 {
            let mb = self.disc.assemble_feibm_added_mass(&state.x)?;
            a = a.combine(1.0, &mb, c.delta_rho / c.dt);
            for (r, v) in rhs.iter_mut().zip(mb.mul_vec(&state.u)) {
                *r += c.delta_rho / c.dt * v;
            }
        }
        let system = build_stokes_system(&a, &self.divergence, &rhs);
        let z = self.solve_system(&system)?;
        let sol = system.split(&z);
        let ns = self.disc.structure.n_nodes();
        let mut x = state.x.clone();
        for i in 0..ns {
            let v = self.disc.velocity_at(&sol.u, [state.x[i], state.x[ns + i]])?;
            x[i] += c.dt * v[0];
            x[ns + i] += c.dt * v[1];
        }
        Ok(State {
            u: sol.u,
            p: sol.p,
            x,
            x_prev: state.x.clone(),
            lambda: vec![0.0; self.disc.n_multiplier()],
            t: (state.step + 1) as f64 * c.dt,
            step: state.step + 1,
        })
    }

    /// Fixed-point iteration on the coupling operator: each pass re-solves the
    /// DLM system with `L_f(X_{k-1})`, starting from `X_0 = X^n`. Runs exactly
    /// `iterations` passes unless `stop_at` is given and reached.
    pub fn fixed_point_iterate(&mut self, state: &State, iterations: usize, stop_at: Option<f64>) -> Result<FixedPointOutcome> {
        let a = self.fluid_operator(&state.u)?;
        let form = self.coupling_form();
        let mut lf = self.disc.assemble_coupling_fluid(&state.x, form)?;
        let mut residuals = Vec::with_capacity(iterations);
        let mut threshold = None;
        let mut current = None;
        for k in 0..iterations {
            let next = self.dlm_solve(state, &a, &lf)?;
            lf = self.disc.assemble_coupling_fluid(&next.x, form)?;
            let r = coupling_residual(
                &lf,
                &self.coupling_structure,
                &next.u,
                &next.x,
                &state.x,
                self.config.dt,
                &self.lumped_mass,
            );
            residuals.push(r);
            if k == 0 {
                threshold = stop_at.map(|eps| eps * self.structure_velocity_scale(&next.x, &state.x).max(1.0));
            }
            current = Some(next);
            if threshold.is_some_and(|t| r <= t) {
                return Ok(FixedPointOutcome {
                    state: current.unwrap(),
                    residuals,
                    converged: true,
                });
            }
        }
        Ok(FixedPointOutcome {
            state: current.ok_or_else(|| Error::invalid("fixed-point iteration needs at least one pass"))?,
            residuals,
            converged: false,
        })
    }

    /// `|L_s (X - X^n)/dt|` in the residual norm; sets the scale of `eps_fp`.
    fn structure_velocity_scale(&self, x: &[f64], x_old: &[f64]) -> f64 {
        let v: Vec<f64> = x.iter().zip(x_old).map(|(a, b)| (a - b) / self.config.dt).collect();
        let lv = self.coupling_structure.mul_vec(&v);
        lv.iter()
            .zip(&self.lumped_mass)
            .map(|(a, m)| a * a / m)
            .sum::<f64>()
            .sqrt()
    }

    /// Fixed-point step with the configured tolerance; non-convergence is an
    /// error.
    pub fn fixed_point_step(&mut self, state: &State) -> Result<FixedPointOutcome> {
        let out = self.fixed_point_iterate(state, self.config.max_fp_iterations, Some(self.config.eps_fp))?;
        if !out.converged {
            return Err(Error::FixedPointDivergence {
                iterations: out.residuals.len(),
                residual: out.residuals.last().copied().unwrap_or(f64::NAN),
            });
        }
        Ok(out)
    }

    /// Advances one step with the configured scheme.
    pub fn step(&mut self, state: &State) -> Result<State> {
        match self.config.scheme {
            Scheme::Dlm => self.dlm_step(state),
            Scheme::Feibm => self.feibm_step(state),
            Scheme::DlmFixedPoint => Ok(self.fixed_point_step(state)?.state),
        }
    }

    /// Diagnostics of the transition `old -> new`.
    pub fn record(&self, old: &State, new: &State, initial_energy: f64) -> Result<DiagnosticsRecord> {
        let e_old = self.energy(old);
        let e_new = self.energy(new);
        let dissipation = self.viscous.bilinear(&new.u, &new.u);
        let lhs = energy_inequality_lhs(&e_new, &e_old, dissipation, self.config.dt);
        let total = e_new.total();
        let ratio = if initial_energy > 0.0 {
            total / initial_energy
        } else if total == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        let lf = self.disc.assemble_coupling_fluid(&old.x, self.coupling_form())?;
        let coupling = coupling_residual(
            &lf,
            &self.coupling_structure,
            &new.u,
            &new.x,
            &old.x,
            self.config.dt,
            &self.lumped_mass,
        );
        let positions = self.disc.dofs_to_positions(&new.x);
        Ok(DiagnosticsRecord {
            step: new.step,
            t: new.t,
            kinetic_fluid: e_new.kinetic_fluid,
            kinetic_structure: e_new.kinetic_structure,
            elastic: e_new.elastic,
            total_energy: total,
            energy_ratio: ratio,
            energy_ineq_lhs: lhs,
            area: enclosed_area(&self.disc.structure, &positions)?,
            div_residual: divergence_residual(&self.divergence, &new.u),
            coupling_residual: coupling,
            status: RunStatus::Completed,
        })
    }

    /// Runs `N = T/dt` steps. Errors that end a run early (structure leaving
    /// the domain, solver failure, fixed-point divergence) are reported in the
    /// trajectory status; energy blow-up aborts after the offending step.
    pub fn run(&mut self, keep_states: bool) -> Result<Trajectory> {
        self.run_with(keep_states, |_, _| Ok(()))
    }

    /// Like [`Simulation::run`], calling `observer` with the initial state
    /// (no record) and after every accepted step. An observer error aborts
    /// the run and is returned.
    pub fn run_with<F>(&mut self, keep_states: bool, mut observer: F) -> Result<Trajectory>
    where
        F: FnMut(&State, Option<&DiagnosticsRecord>) -> Result<()>,
    {
        let mut state = self.initialize();
        observer(&state, None)?;
        let initial = self.energy(&state);
        let initial_area = enclosed_area(&self.disc.structure, &self.disc.dofs_to_positions(&state.x))?;
        let mut traj = Trajectory {
            initial_energy: initial.total(),
            initial_area,
            records: Vec::new(),
            states: Vec::new(),
            status: RunStatus::Completed,
            message: None,
            final_state: state.clone(),
        };
        if keep_states {
            traj.states.push(state.clone());
        }
        for _ in 0..self.config.n_steps() {
            let next = match self.step(&state) {
                Ok(s) => s,
                Err(e) => {
                    traj.status = match &e {
                        Error::OutOfDomain { .. } => RunStatus::StructureEscape,
                        Error::SolverFailure { .. } | Error::FixedPointDivergence { .. } => RunStatus::SolverFailure,
                        _ => return Err(e),
                    };
                    traj.message = Some(e.to_string());
                    break;
                }
            };
            let mut rec = match self.record(&state, &next, traj.initial_energy) {
                Ok(r) => r,
                Err(e @ Error::OutOfDomain { .. }) => {
                    traj.status = RunStatus::StructureEscape;
                    traj.message = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            let finite = next.u.iter().chain(&next.x).chain(&next.p).all(|v| v.is_finite())
                && rec.total_energy.is_finite()
                && rec.energy_ratio.is_finite();
            if !finite || rec.energy_ratio > self.config.blowup_threshold {
                rec.status = RunStatus::EnergyBlowupDetected;
                traj.status = RunStatus::EnergyBlowupDetected;
            }
            observer(&next, Some(&rec))?;
            traj.records.push(rec);
            state = next;
            if keep_states {
                traj.states.push(state.clone());
            }
            if traj.status == RunStatus::EnergyBlowupDetected {
                break;
            }
        }
        traj.final_state = state;
        Ok(traj)
    }
}

/// Output of [`Simulation::run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub initial_energy: f64,
    pub initial_area: f64,
    /// One record per completed step.
    pub records: Vec<DiagnosticsRecord>,
    /// All states including the initial one, when requested.
    pub states: Vec<State>,
    pub status: RunStatus,
    pub message: Option<String>,
    pub final_state: State,
}

impl Trajectory {
    /// Largest energy-inequality LHS relative to its tolerance; `<= 1` means
    /// every step satisfied the discrete energy estimate.
    pub fn worst_energy_violation(&self) -> f64 {
        let mut prev = self.initial_energy;
        let mut worst = f64::NEG_INFINITY;
        for r in &self.records {
            worst = worst.max(r.energy_ineq_lhs / crate::diagnostics::energy_tolerance(prev));
            prev = r.total_energy;
        }
        worst
    }

    pub fn final_energy_ratio(&self) -> f64 {
        self.records.last().map_or(1.0, |r| r.energy_ratio)
    }

    pub fn final_area_drift(&self) -> f64 {
        let last = self.records.last().map_or(self.initial_area, |r| r.area);
        (last - self.initial_area).abs() / self.initial_area.abs()
    }
}

