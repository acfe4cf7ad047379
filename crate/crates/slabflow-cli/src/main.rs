//! `slabflow` — command-line driver for the free-surface slab solver.
//!
//! Subcommands: `run` (Picard window simulation with dumps, CSV, and JSON
//! summary), `verify` (identity / lemma / manufactured-solution suites),
//! `bench` (wall-time table for the core kernels), `extend` (standalone
//! Poisson-extension dump).
//!
//! Exit codes for `run`: 0 converged, 2 boundedness-monitor trip or failed
//! contraction, 3 solver failure. `verify` exits 1 when an identity-class
//! check fails. Configuration problems exit 1 with one message per issue.
//! The `SLABFLOW_THREADS` environment variable caps worker parallelism.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use slabflow_core::config::{parse_config, PicardMode, RunConfig};
use slabflow_core::diagnostics::{build_report, run_lemma_suite};
use slabflow_core::elliptic::{a_stokes_apply, DefectOpts, FlatStokesSolver, StokesRHS};
use slabflow_core::error::SlabflowError;
use slabflow_core::evolution::{
    assemble_forcing, build_initial_data, kinetic_energy, solve_linear_ns_window,
    solve_transport, transport_rhs, InitialDataOpts, SurfaceTrajectory, WindowOpts,
};
use slabflow_core::geometry::{
    build_geometry, choose_epsilon, poisson_extend, BottomProfile, ExtensionParams,
};
use slabflow_core::io::{
    lock_output_dir, write_diagnostics_csv, write_field_dump, write_summary, DiagnosticsRow,
};
use slabflow_core::iteration::{run_picard_window, PicardConfig, PicardReport};
use slabflow_core::spectral::{Grid, GridSpec, SlabField, SlabVectorField, SurfaceField};

#[derive(Parser)]
#[command(name = "slabflow", about = "Spectral free-surface slab flow solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Picard window simulation described by a config file.
    Run { config: PathBuf },
    /// Run the identity, lemma, and manufactured-solution verification suites.
    Verify { config: PathBuf },
    /// Time the core kernels across grid sizes.
    Bench { config: PathBuf },
    /// Dump the Poisson extension of the configured initial surface.
    Extend { config: PathBuf },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    if let Err(code) = setup_threads() {
        return code;
    }
    let (path, runner): (&PathBuf, fn(&RunConfig) -> i32) = match &cli.command {
        Command::Run { config } => (config, cmd_run),
        Command::Verify { config } => (config, cmd_verify),
        Command::Bench { config } => (config, cmd_bench),
        Command::Extend { config } => (config, cmd_extend),
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", path.display());
            return 1;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(issues) => {
            eprintln!("error: invalid config {}:", path.display());
            for issue in issues {
                eprintln!("  {issue}");
            }
            return 1;
        }
    };
    runner(&cfg)
}

fn setup_threads() -> Result<(), i32> {
    if let Ok(v) = std::env::var("SLABFLOW_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            eprintln!("error: SLABFLOW_THREADS must be a positive integer, got `{v}`");
            1
        })?;
        if n == 0 {
            eprintln!("error: SLABFLOW_THREADS must be positive");
            return Err(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| {
                eprintln!("error: thread pool setup failed: {e}");
                1
            })?;
    }
    Ok(())
}

/// 0 converged, 2 monitor/contraction trip, 3 solver failure.
fn run_exit_code(e: &SlabflowError) -> i32 {
    match e {
        SlabflowError::MonitorTripped { .. }
        | SlabflowError::ContractionFailed { .. }
        | SlabflowError::JacobianFloor { .. } => 2,
        _ => 3,
    }
}

fn params_for(cfg: &RunConfig, eta0: &SurfaceField, bottom: &BottomProfile) -> Result<ExtensionParams, SlabflowError> {
    let mut params = choose_epsilon(eta0, bottom, cfg.c_poisson)?;
    if let Some(d) = cfg.delta_override {
        params.delta = d;
    }
    Ok(params)
}

fn cmd_run(cfg: &RunConfig) -> i32 {
    match try_run(cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            run_exit_code(&e)
        }
    }
}

fn try_run(cfg: &RunConfig) -> Result<(), SlabflowError> {
    let grid = cfg.grid()?;
    let bottom = cfg.bottom(&grid)?;
    let eta0 = cfg.eta0(&grid);
    let u0 = cfg.u0(&grid);
    let params = params_for(cfg, &eta0, &bottom)?;
    let data = build_initial_data(&u0, &eta0, &bottom, &params, &InitialDataOpts::default())?;

    let out_dir = PathBuf::from(&cfg.output_dir);
    let _lock = lock_output_dir(&out_dir)?;

    let (traj, report) = match cfg.mode {
        PicardMode::Full => {
            let picard = PicardConfig {
                tol_n: cfg.tol_n,
                max_picard: cfg.max_picard,
                ..PicardConfig::new(cfg.t_end, cfg.dt, params.delta)
            };
            run_picard_window(&data, &picard)?
        }
        PicardMode::Linear => {
            // Debug mode: frozen geometry, gravity stress only.
            let surface = SurfaceTrajectory::frozen(&eta0, 0.0, cfg.dt, cfg.nsteps());
            let h0 = slabflow_core::SurfaceVectorField::new([
                data.eta0.multiply(data.pack0.ntop.comp(0)),
                data.eta0.multiply(data.pack0.ntop.comp(1)),
                data.eta0.clone(),
            ]);
            let mut forcing = |_k: usize| (SlabVectorField::zeros(&grid), h0.clone());
            let traj = solve_linear_ns_window(
                &surface,
                &data.u0,
                &data.p0,
                &mut forcing,
                &bottom,
                &params,
                &WindowOpts::default(),
            )?;
            (traj, PicardReport { sweeps: Vec::new(), converged: true, nonlinear_residual: 0.0 })
        }
    };

    // Per-node diagnostics CSV and field dumps.
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut deta_traj = Vec::with_capacity(traj.states.len());
    let mut f_traj = Vec::with_capacity(traj.states.len());
    let mut h_traj = Vec::with_capacity(traj.states.len());
    for (k, s) in traj.states.iter().enumerate() {
        let deta = transport_rhs(&s.eta, &s.u.trace_top());
        let pack = build_geometry(&s.eta, Some(&deta), &bottom, &params)?;
        let (f, h) = assemble_forcing(&pack, &s.u);
        rows.push(DiagnosticsRow {
            t: s.t,
            min_j: if k == 0 { pack.min_j } else { traj.step_diags[k - 1].min_j },
            energy: kinetic_energy(&pack, &s.u),
            div_residual: if k == 0 { 0.0 } else { traj.step_diags[k - 1].div_residual },
            eta_amplitude: s.eta.linf_norm(),
            sweeps: if k == 0 { 0 } else { traj.step_diags[k - 1].sweeps },
        });
        if k % cfg.dump_cadence == 0 {
            write_field_dump(
                &out_dir.join(format!("fields_{k:05}.slf")),
                &grid,
                s.t,
                &[s.u.comp(0), s.u.comp(1), s.u.comp(2), &s.p],
            )?;
        }
        deta_traj.push(deta);
        f_traj.push(f);
        h_traj.push(h);
    }
    write_diagnostics_csv(&out_dir.join("diagnostics.csv"), &rows)?;

    let surface = SurfaceTrajectory {
        t0: traj.t0,
        dt: traj.dt,
        eta: traj.states.iter().map(|s| s.eta.clone()).collect(),
        deta_dt: deta_traj,
    };
    let diag = build_report(&traj, &surface, &bottom, &params, &f_traj, &h_traj, cfg.seed)?;
    write_summary(&out_dir.join("summary.json"), &report, &diag)?;
    println!(
        "converged in {} Picard sweep(s); nonlinear residual {:.3e}; min J {:.4}; \
         outputs in {}",
        report.sweeps.len().max(1),
        report.nonlinear_residual,
        diag.min_j,
        out_dir.display()
    );
    Ok(())
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: String,
    pass: bool,
    identity_class: bool,
}

fn cmd_verify(cfg: &RunConfig) -> i32 {
    let grid = match cfg.grid() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let params = ExtensionParams { epsilon: 0.3, delta: 0.45, c_poisson: cfg.c_poisson };
    let mut suite = run_lemma_suite(&params, &grid, cfg.seed);
    // Test hook: deliberately corrupt an identity residual so the negative
    // path of the verifier is exercisable.
    if std::env::var("SLABFLOW_CORRUPT_GEOMETRY").is_ok() {
        if let Some(v) = suite.get_mut("piola_curved") {
            *v += 1.0;
        }
    }

    let mut checks: Vec<Check> = Vec::new();
    let ident = |name: &'static str, value: f64, tol: f64| Check {
        name,
        value,
        threshold: format!("<= {tol:.0e}"),
        pass: value <= tol,
        identity_class: true,
    };
    for key in ["piola_flat", "surface_normal_flat", "bottom_normal_flat", "r_identity_flat"] {
        checks.push(ident(key, suite[key], 1e-10));
    }
    for key in
        ["piola_curved", "surface_normal_curved", "bottom_normal_curved", "r_identity_curved"]
    {
        checks.push(ident(key, suite[key], 1e-8));
    }

    // Poisson extension: exact trace recovery on the top boundary.
    let f = SurfaceField::from_fn(&grid, |x1, x2| {
        (2.0 * std::f64::consts::PI * x1).cos() + 0.5 * (2.0 * std::f64::consts::PI * x2).sin()
    });
    let trace_res = (&poisson_extend(&f, params.epsilon).trace_top() - &f).linf_norm();
    checks.push(ident("poisson_trace", trace_res, 1e-12));

    // Manufactured A-Stokes round trip on the flat pack with discrete data.
    let man_res = manufactured_stokes_residual(&grid);
    checks.push(ident("manufactured_stokes", man_res, 1e-7));

    // Bound slacks (reported, non-identity-class).
    let bound = |name: &'static str, value: f64, ok: bool, threshold: String| Check {
        name,
        value,
        threshold,
        pass: ok,
        identity_class: false,
    };
    checks.push(bound("poisson4_slack", suite["poisson4_slack"], suite["poisson4_slack"] <= 1.0, "<= 1".into()));
    checks.push(bound("poisson5_slack", suite["poisson5_slack"], suite["poisson5_slack"] <= 1.0, "<= 1".into()));
    let slope = suite["poisson6_slope"];
    checks.push(bound("poisson6_slope", slope, (slope - 1.0).abs() <= 0.05, "1.00 +- 0.05".into()));
    checks.push(bound("korn_flat_low", suite["korn_flat_low"], suite["korn_flat_low"] > 0.0, "> 0".into()));
    checks.push(bound("transport_slack", suite["transport_slack"], suite["transport_slack"] <= 1.0, "<= 1".into()));

    println!("{:<24} {:>14} {:>14} {:>6}", "check", "value", "threshold", "status");
    for c in &checks {
        println!(
            "{:<24} {:>14.6e} {:>14} {:>6}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }

    // Epsilon-scaling study table.
    let f1 = SurfaceField::from_fn(&grid, |x1, _| (2.0 * std::f64::consts::PI * x1).cos());
    println!("\nepsilon-scaling of sup |d3 P^eps f| (single-mode f):");
    for eps in [1e-3, 1e-2, 1e-1] {
        println!("  eps = {eps:>7.1e}: {:.6e}", poisson_extend(&f1, eps).deriv_z().linf_norm());
    }

    if checks.iter().all(|c| !c.identity_class || c.pass) {
        println!("\nall identity-class checks passed");
        0
    } else {
        eprintln!("\nidentity-class check failed");
        1
    }
}

/// Relative error of the flat A-Stokes solve against a manufactured pair
/// with discrete data (right side produced by the discrete operator).
fn manufactured_stokes_residual(grid: &Grid) -> f64 {
    use std::f64::consts::PI;
    let spec = grid.spec();
    let (b0, l1) = (spec.b0, spec.l1);
    let u = SlabVectorField::new([
        SlabField::from_fn(grid, |x1, _, x3| {
            PI / b0 * (2.0 * PI * (x3 + b0) / b0).sin() * (2.0 * PI * x1 / l1).sin()
        }),
        SlabField::zeros(grid),
        SlabField::from_fn(grid, |x1, _, x3| {
            -2.0 * PI / l1 * (PI * (x3 + b0) / b0).sin().powi(2) * (2.0 * PI * x1 / l1).cos()
        }),
    ]);
    let p = SlabField::from_fn(grid, |x1, _, x3| {
        (2.0 * PI * x1 / l1).cos() * ((x3 + b0) / b0).powi(2)
    });
    let pack = slabflow_core::geometry::GeometryPack::flat(grid);
    let sigma = 1.0;
    let rhs = a_stokes_apply(&pack, &u, &p, sigma);
    let solver = FlatStokesSolver::new(grid, sigma).expect("flat kernel");
    let (sol, _sweeps) = solver
        .solve_a_stokes(&pack, &rhs, &DefectOpts::default())
        .expect("flat defect solve");
    let scale = u.sobolev_norm(1).max(1e-14);
    ((&sol.u - &u).sobolev_norm(1) + (&sol.p - &p).l2_norm()) / scale
}

fn cmd_bench(cfg: &RunConfig) -> i32 {
    use std::f64::consts::PI;
    let sizes = [(8usize, 8usize, 9usize), (16, 16, 13), (32, 32, 17)];
    let mut csv = String::from("operation,grid,wall_time_s,throughput_dof_per_s\n");
    for (n1, n2, nz) in sizes {
        let grid = match Grid::new(GridSpec {
            l1: cfg.l1,
            l2: cfg.l2,
            b0: cfg.b0,
            n1,
            n2,
            nz,
            dealias: cfg.dealias,
        }) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        };
        let dof = (4 * n1 * n2 * nz) as f64;
        let label = format!("{n1}x{n2}x{nz}");

        let solver = FlatStokesSolver::new(&grid, 1.0).expect("flat kernel");
        let rhs = StokesRHS {
            f: SlabVectorField::new([
                SlabField::random(&grid, cfg.seed, 3, 1.0),
                SlabField::random(&grid, cfg.seed + 1, 3, 1.0),
                SlabField::random(&grid, cfg.seed + 2, 3, 1.0),
            ]),
            g: SlabField::zeros(&grid),
            h: slabflow_core::SurfaceVectorField::zeros(&grid),
        };
        let reps = 5;
        let t0 = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(solver.solve(&rhs));
        }
        let flat_t = t0.elapsed().as_secs_f64() / reps as f64;
        csv.push_str(&format!("flat_solve,{label},{flat_t:e},{:e}\n", dof / flat_t));

        let eta = SurfaceField::from_fn(&grid, |x1, _| 0.02 * (2.0 * PI * x1 / cfg.l1).cos());
        let params = ExtensionParams { epsilon: 0.3, delta: 0.45, c_poisson: cfg.c_poisson };
        let pack = build_geometry(&eta, None, &BottomProfile::flat(&grid), &params)
            .expect("benchmark geometry");
        let sol = solver.solve(&rhs);
        let t0 = Instant::now();
        for _ in 0..reps {
            let residual = rhs.sub(&a_stokes_apply(&pack, &sol.u, &sol.p, 1.0));
            std::hint::black_box(solver.solve(&residual));
        }
        let sweep_t = t0.elapsed().as_secs_f64() / reps as f64;
        csv.push_str(&format!("a_stokes_sweep,{label},{sweep_t:e},{:e}\n", dof / sweep_t));

        let vel = slabflow_core::SurfaceVectorField::new([
            SurfaceField::from_fn(&grid, |x1, _| 0.05 * (2.0 * PI * x1 / cfg.l1).cos()),
            SurfaceField::zeros(&grid),
            SurfaceField::zeros(&grid),
        ]);
        let t0 = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(
                solve_transport(&eta, &|_t| vel.clone(), 0.0, 1e-3, 1).expect("transport step"),
            );
        }
        let tr_t = t0.elapsed().as_secs_f64() / reps as f64;
        let sdof = (n1 * n2) as f64;
        csv.push_str(&format!("transport_step,{label},{tr_t:e},{:e}\n", sdof / tr_t));
    }
    print!("{csv}");
    let out_dir = PathBuf::from(&cfg.output_dir);
    if let Err(e) = std::fs::create_dir_all(&out_dir)
        .map_err(SlabflowError::from)
        .and_then(|_| Ok(std::fs::write(out_dir.join("bench.csv"), &csv)?))
    {
        eprintln!("error: cannot write bench.csv: {e}");
        return 1;
    }
    0
}

fn cmd_extend(cfg: &RunConfig) -> i32 {
    match try_extend(cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn try_extend(cfg: &RunConfig) -> Result<(), SlabflowError> {
    let grid = cfg.grid()?;
    let bottom = cfg.bottom(&grid)?;
    let eta0 = cfg.eta0(&grid);
    let params = params_for(cfg, &eta0, &bottom)?;
    let ext = poisson_extend(&eta0, params.epsilon);
    let out_dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(out_dir)?;
    write_field_dump(&out_dir.join("extension.slf"), &grid, 0.0, &[&ext])?;
    println!(
        "epsilon = {:.6e}, delta = {:.6e}; sup |P^eps eta0| = {:.6e}, \
         sup |d3 P^eps eta0| = {:.6e}; wrote {}",
        params.epsilon,
        params.delta,
        ext.linf_norm(),
        ext.deriv_z().linf_norm(),
        out_dir.join("extension.slf").display()
    );
    Ok(())
}
