use std::process::Command;

use dlm_ibm::config::{config_to_toml, parse_config_str, GeometryPreset, PreviousPositionInit, Scheme, SimulationConfig, SweepSpec};
use dlm_ibm::diagnostics::{energy_tolerance, RunStatus};
use dlm_ibm::experiments::{cmd_run, convergence_space, convergence_time, mass_compare, stability_map};
use dlm_ibm::output::{diagnostics_to_csv, read_diagnostics_csv};
use dlm_ibm::schemes::Simulation;
use dlm_ibm::solver::{solve, BlockOffsets, BlockSystem, SolverOptions};
use dlm_ibm::sparse::TripletList;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(scheme: Scheme) -> SimulationConfig {
    SimulationConfig {
        scheme,
        h_x: 1.0 / 8.0,
        h_s: 1.0 / 8.0,
        t_final: 0.3,
        ..SimulationConfig::default()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn unstressed_structure_stays_at_rest() {
    for scheme in [Scheme::Dlm, Scheme::Feibm, Scheme::DlmFixedPoint] {
        let c = SimulationConfig { kappa: 0.0, ..small(scheme) };
        let mut sim = Simulation::new(c).unwrap();
        let s0 = sim.initialize();
        let s1 = sim.step(&s0).unwrap();
        assert!(max_abs(&s1.u) < 1e-13, "{scheme:?}");
        assert!(max_abs(&s1.p) < 1e-12, "{scheme:?}");
        let dx = s1.x.iter().zip(&s0.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dx < 1e-13, "{scheme:?}: {dx:e}");
    }
}

#[test]
fn step_respects_constraints_gauge_and_divergence() {
    for scheme in [Scheme::Dlm, Scheme::Feibm] {
        let mut sim = Simulation::new(small(scheme)).unwrap();
        let mask = sim.disc.dofs.velocity.constraint_mask();
        let w = sim.disc.pressure_basis_integrals();
        let np1 = sim.disc.fluid.n_coarse_vertices();
        let mut s = sim.initialize();
        for _ in 0..3 {
            s = sim.step(&s).unwrap();
            for (k, &fixed) in mask.iter().enumerate() {
                if fixed {
                    assert_eq!(s.u[k], 0.0);
                }
            }
            for range in [0..np1, np1..s.p.len()] {
                let mean: f64 = s.p[range.clone()].iter().zip(&w[range]).map(|(a, b)| a * b).sum();
                assert!(mean.abs() < 1e-12, "{scheme:?}: mean {mean:e}");
            }
            let bu = sim.divergence.mul_vec(&s.u);
            assert!(max_abs(&bu) < 1e-9, "{scheme:?}");
            assert!(sim.last_solve.as_ref().unwrap().backward_error <= 1e-10);
        }
    }
}

#[test]
fn direct_solve_matches_dense_lu() {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // SPD block of size 40 bordered by 10 constraint rows
    let m = 40;
    let r: Vec<f64> = (0..m * m).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..m {
        for j in 0..m {
            let v: f64 = (0..m).map(|k| r[i * m + k] * r[j * m + k]).sum();
            dense[(i, j)] = v + if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in m..n {
        for j in 0..m {
            if rng.random::<f64>() < 0.3 {
                let v = rng.random::<f64>() - 0.5;
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        dense[(i, i - m)] += 1.0;
        dense[(i - m, i)] += 1.0;
    }
    let mut t = TripletList::new(n, n);
    for i in 0..n {
        for j in 0..n {
            if dense[(i, j)] != 0.0 {
                t.push(i, j, dense[(i, j)]);
            }
        }
    }
    let rhs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let system = BlockSystem {
        matrix: t.to_csr(),
        rhs: rhs.clone(),
        offsets: BlockOffsets {
            u: 0,
            p: m,
            x: n,
            lambda: n,
            gauge: n,
            total: n,
        },
    };
    let (z, report) = solve(&system, &SolverOptions::default()).unwrap();
    let want = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
    let scale = want.amax();
    for i in 0..n {
        assert!((z[i] - want[i]).abs() < 1e-10 * scale.max(1.0), "row {i}");
    }
    assert!(report.backward_error < 1e-12);
}

#[test]
fn single_step_satisfies_energy_inequality() {
    for scheme in [Scheme::Dlm, Scheme::DlmFixedPoint] {
        let c = SimulationConfig { t_final: 0.1, ..small(scheme) };
        let mut sim = Simulation::new(c).unwrap();
        let traj = sim.run(false).unwrap();
        let rec = &traj.records[0];
        assert!(rec.energy_ineq_lhs <= energy_tolerance(traj.initial_energy), "{scheme:?}");
        assert!(rec.energy_ratio < 1.0);
    }
}

#[test]
fn translating_the_domain_translates_the_solution() {
    let base = small(Scheme::Dlm);
    let mut moved = base.clone();
    let shift = [1.25, -0.75];
    moved.geometry.domain_origin = [shift[0], shift[1]];
    moved.geometry.center = [base.geometry.center[0] + shift[0], base.geometry.center[1] + shift[1]];
    let a = Simulation::new(base).unwrap().run(false).unwrap().final_state;
    let b = Simulation::new(moved).unwrap().run(false).unwrap().final_state;
    let ns = a.x.len() / 2;
    for k in 0..a.x.len() {
        let want = a.x[k] + if k < ns { shift[0] } else { shift[1] };
        assert!((b.x[k] - want).abs() < 1e-10);
    }
    for (p, q) in a.u.iter().zip(&b.u).chain(a.p.iter().zip(&b.p)) {
        assert!((p - q).abs() < 1e-10);
    }
}

#[test]
fn runs_are_deterministic_and_config_echo_reproduces() {
    let c = SimulationConfig {
        delta_rho: 0.3,
        ..small(Scheme::Dlm)
    };
    let first = Simulation::new(c.clone()).unwrap().run(false).unwrap();
    let second = Simulation::new(c.clone()).unwrap().run(false).unwrap();
    assert_eq!(first.records, second.records);

    let echoed = parse_config_str(&config_to_toml(&c)).unwrap().config;
    assert_eq!(echoed, c);
    let third = Simulation::new(echoed).unwrap().run(false).unwrap();
    assert_eq!(
        diagnostics_to_csv(&first.records).unwrap(),
        diagnostics_to_csv(&third.records).unwrap()
    );
}

#[test]
fn step_count_and_times() {
    let c = SimulationConfig {
        h_x: 1.0 / 4.0,
        h_s: 1.0 / 4.0,
        t_final: 2.0,
        dt: 0.1,
        ..SimulationConfig::default()
    };
    let traj = Simulation::new(c).unwrap().run(false).unwrap();
    assert_eq!(traj.records.len(), 20);
    for (n, r) in traj.records.iter().enumerate() {
        assert_eq!(r.step, n + 1);
        assert_eq!(r.t, (n + 1) as f64 * 0.1);
    }
}

#[test]
fn previous_position_irrelevant_without_density_jump() {
    let a = small(Scheme::Dlm);
    let b = SimulationConfig {
        x_prev_init: PreviousPositionInit::Zero,
        ..a.clone()
    };
    let ra = Simulation::new(a).unwrap().run(false).unwrap();
    let rb = Simulation::new(b).unwrap().run(false).unwrap();
    assert_eq!(ra.final_state.x, rb.final_state.x);
    assert_eq!(ra.final_state.u, rb.final_state.u);
}

#[test]
fn fixed_point_at_rest_converges_immediately() {
    let c = SimulationConfig {
        kappa: 0.0,
        ..small(Scheme::DlmFixedPoint)
    };
    let mut sim = Simulation::new(c).unwrap();
    let s0 = sim.initialize();
    let out = sim.fixed_point_step(&s0).unwrap();
    assert!(out.converged);
    assert_eq!(out.residuals.len(), 1);
}

#[test]
fn zero_final_time_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let c = SimulationConfig {
        t_final: 0.0,
        ..small(Scheme::Dlm)
    };
    let manifest = cmd_run(&c, dir.path(), &[0.0]).unwrap();
    assert_eq!(manifest.status, RunStatus::Completed);
    assert_eq!(manifest.steps, 0);
    assert!(read_diagnostics_csv(dir.path().join("diagnostics.csv")).unwrap().is_empty());
    assert_eq!(manifest.vtk_files.len(), 2);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn stability_map_has_one_row_per_cell() {
    let sweep = SweepSpec {
        dt: vec![0.1],
        h_x: vec![0.25],
        h_s: vec![0.25, 0.125],
        delta_rho: vec![0.0],
    };
    let base = SimulationConfig {
        t_final: 0.2,
        ..SimulationConfig::default()
    };
    let cells = stability_map(&base, &sweep);
    assert_eq!(cells.len(), 4);
    assert_eq!(cells.iter().filter(|c| c.scheme == Scheme::Feibm).count(), 2);
    assert!(cells.iter().all(|c| c.status == Some(RunStatus::Completed) && c.steps == 2));
}

#[test]
fn mass_compare_at_rest() {
    let c = SimulationConfig {
        kappa: 0.0,
        ..small(Scheme::Dlm)
    };
    let m = mass_compare(&c).unwrap();
    assert_eq!(m.dlm_area[0], m.feibm_area[0]);
    assert!(m.dlm_drift < 1e-13 && m.feibm_drift < 1e-13);
    let codim0 = SimulationConfig {
        geometry: dlm_ibm::config::GeometryConfig {
            preset: GeometryPreset::EllipseCodim0,
            ..c.geometry.clone()
        },
        ..c
    };
    assert!(mass_compare(&codim0).is_err());
}

#[test]
fn convergence_needs_two_levels() {
    let c = small(Scheme::Dlm);
    assert!(convergence_space(&c, &[0.125]).is_err());
    assert!(convergence_time(&c, &[0.1], 0.01).is_err());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dlm-ibm"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let mut c = small(Scheme::Dlm);
    std::fs::write(&cfg, config_to_toml(&c)).unwrap();
    let ok = cli().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("a")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    c.blowup_threshold = 0.5;
    std::fs::write(&cfg, config_to_toml(&c)).unwrap();
    let blow = cli().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("b")).output().unwrap();
    assert_eq!(blow.status.code(), Some(2));
    let rows = read_diagnostics_csv(dir.path().join("b/diagnostics.csv")).unwrap();
    assert_eq!(rows.last().unwrap().status, RunStatus::EnergyBlowupDetected);

    std::fs::write(&cfg, "[physics]\nkappa = -1.0\n").unwrap();
    let bad = cli().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("kappa"));

    let bogus = cli().arg("frobnicate").output().unwrap();
    assert_eq!(bogus.status.code(), Some(1));
}
