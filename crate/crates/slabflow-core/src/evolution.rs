//! Time-dependent pieces: forcing assembly, initial-data construction and
//! compatibility checks, the backward-Euler linear Navier-Stokes window
//! solver, and the RK4 surface transport solver.
//!
//! The window solver treats the geometry as *given*: the caller supplies a
//! surface trajectory `eta(t)` (with its time derivative), and each backward
//! Euler step builds the coefficient pack at the END time of the step and
//! performs one A-Stokes solve with zeroth-order coefficient `1/dt` and
//! right-hand side `F + u_prev/dt`. The transport solver advances the
//! kinematic surface equation `dt eta + u1 d1 eta + u2 d2 eta = u3` with
//! classical RK4 in time and spectral horizontal derivatives.

use crate::elliptic::{
    solve_a_poisson_divergence_form, DefectOpts, FlatStokesSolver, StokesRHS,
};
use crate::error::{Result, SlabflowError};
use crate::geometry::{build_geometry, project_tangent, BottomProfile, ExtensionParams, GeometryPack};
use crate::spectral::{SlabField, SlabVectorField, SurfaceField, SurfaceVectorField};

/// Solution triple at one time node.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub u: SlabVectorField,
    pub p: SlabField,
    pub eta: SurfaceField,
}

/// Per-step health numbers recorded by the window solver.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub t: f64,
    /// `max |div_A u|` after the step, relative to the data scale.
    pub div_residual: f64,
    /// `max |u|` on the bottom boundary after the step.
    pub bottom_slip: f64,
    /// Defect-correction sweeps spent in the step's A-Stokes solve.
    pub sweeps: usize,
    /// Grid minimum of the Jacobian at the step's end time.
    pub min_j: f64,
}

/// Uniform-in-time sequence of flow states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<FlowState>,
    pub step_diags: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("trajectory has at least the initial node")
    }
}

/// Surface-only trajectory (frozen coefficients for the linear solver).
#[derive(Debug, Clone)]
pub struct SurfaceTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub eta: Vec<SurfaceField>,
    /// Closed-form `dt eta` at each node (from the transport right-hand
    /// side, never from differencing snapshots).
    pub deta_dt: Vec<SurfaceField>,
}

impl SurfaceTrajectory {
    /// Stationary surface held for `nsteps` steps.
    pub fn frozen(eta: &SurfaceField, t0: f64, dt: f64, nsteps: usize) -> Self {
        let zero = SurfaceField::zeros(eta.grid());
        SurfaceTrajectory {
            t0,
            dt,
            eta: vec![eta.clone(); nsteps + 1],
            deta_dt: vec![zero; nsteps + 1],
        }
    }

    pub fn nsteps(&self) -> usize {
        self.eta.len() - 1
    }
}

/// Fully constructed initial data: the order-0 and order-1 chain
/// `(u0, eta0) -> (dt eta(0), p(0), dt u(0))`.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: SlabVectorField,
    pub eta0: SurfaceField,
    /// `dt eta(0) = u0 . N0` on the top boundary.
    pub deta_dt0: SurfaceField,
    /// Initial pressure from the A0-Poisson problem.
    pub p0: SlabField,
    /// `dt u(0) = lap_A0 u0 - grad_A0 p(0) + F(0)`.
    pub dt_u0: SlabVectorField,
    /// Sup-norm of the tangential stress compatibility defect.
    pub compat_residual: f64,
    /// Geometry at `t = 0` (with time derivatives populated).
    pub pack0: GeometryPack,
}

/// Tolerances used while constructing and admitting initial data.
#[derive(Debug, Clone, Copy)]
pub struct InitialDataOpts {
    /// Cap on the divergence and bottom-slip residuals of `u0`.
    pub constraint_tol: f64,
    /// Cap on the tangential stress compatibility residual.
    pub compat_tol: f64,
    /// When false, an incompatible residual is recorded but not fatal.
    pub enforce_compat: bool,
    /// Elliptic solve options for the initial pressure.
    pub elliptic: DefectOpts,
}

impl Default for InitialDataOpts {
    fn default() -> Self {
        InitialDataOpts {
            constraint_tol: 1e-8,
            compat_tol: 1e-6,
            enforce_compat: true,
            elliptic: DefectOpts::default(),
        }
    }
}

/// Assembles the forcing pair of the linear problem:
/// `F = dt(etabar) btilde K d3 u - u . grad_A u` and `H = eta N`.
/// All products are dealiased (per the grid's flag).
pub fn assemble_forcing(pack: &GeometryPack, u: &SlabVectorField) -> (SlabVectorField, SurfaceVectorField) {
    let grid = pack.grid();
    let transport_coef = pack
        .detabar
        .as_ref()
        .map(|detabar| detabar.multiply(&pack.btilde).multiply(&pack.kfac));
    let f = SlabVectorField::new(std::array::from_fn(|c| {
        let uc = u.comp(c);
        let grad = pack.grad_a(uc);
        let mut advect = u.comp(0).multiply(grad.comp(0));
        advect += &u.comp(1).multiply(grad.comp(1));
        advect += &u.comp(2).multiply(grad.comp(2));
        match &transport_coef {
            Some(coef) => &coef.multiply(&uc.deriv_z()) - &advect,
            None => -&advect,
        }
    }));
    let h = SurfaceVectorField::new(std::array::from_fn(|c| {
        if c == 2 {
            pack.eta.clone()
        } else {
            pack.eta.multiply(pack.ntop.comp(c))
        }
    }));
    let _ = grid;
    (f, h)
}

/// Sup-norm of the tangential stress compatibility defect
/// `Pi_0 (H(0) + D_A0 u0 N0)`.
pub fn check_compatibility(pack: &GeometryPack, u0: &SlabVectorField) -> f64 {
    let (_, h0) = assemble_forcing(pack, u0);
    let defect = &h0 - &pack.stress_normal_top(&SlabField::zeros(pack.grid()), u0);
    project_tangent(&defect, &pack.eta).linf_norm()
}

/// Constructs the derived initial fields: `dt eta(0) = u0 . N0`, `p(0)` from
/// the A0-Poisson problem in divergence form, and
/// `dt u(0) = lap_A0 u0 - grad_A0 p(0) + F(0)`.
pub fn build_initial_data(
    u0: &SlabVectorField,
    eta0: &SurfaceField,
    bottom: &BottomProfile,
    params: &ExtensionParams,
    opts: &InitialDataOpts,
) -> Result<InitialData> {
    let grid = eta0.grid().clone();
    // dt eta(0) = u0 . N0 = -u1 d1 eta0 - u2 d2 eta0 + u3 on the top.
    let trace = u0.trace_top();
    let mut deta_dt0 = trace.comp(2).clone();
    deta_dt0 -= &trace.comp(0).multiply(&eta0.deriv(1));
    deta_dt0 -= &trace.comp(1).multiply(&eta0.deriv(2));
    let pack0 = build_geometry(eta0, Some(&deta_dt0), bottom, params)?;

    let u_scale = u0.linf_norm().max(1.0);
    let div_res = pack0.div_a(u0).linf_norm() / u_scale;
    if div_res > opts.constraint_tol {
        return Err(SlabflowError::IncompatibleData {
            what: "div_A0 u0 = 0".into(),
            residual: div_res,
            tol: opts.constraint_tol,
        });
    }
    let slip = u0.trace_bottom().linf_norm() / u_scale;
    if slip > opts.constraint_tol {
        return Err(SlabflowError::IncompatibleData {
            what: "u0 = 0 on the bottom".into(),
            residual: slip,
            tol: opts.constraint_tol,
        });
    }

    let (f0, h0) = assemble_forcing(&pack0, u0);
    let compat_residual = check_compatibility(&pack0, u0);
    if opts.enforce_compat && compat_residual > opts.compat_tol {
        return Err(SlabflowError::IncompatibleData {
            what: "tangential stress compatibility Pi_0(H(0) + D_A0 u0 N0)".into(),
            residual: compat_residual,
            tol: opts.compat_tol,
        });
    }

    // Dirichlet datum (H(0) + D_A0 u0 N0) . N0 |N0|^{-2} on the top.
    let d = &h0 - &pack0.stress_normal_top(&SlabField::zeros(&grid), u0);
    let mut dn = d.comp(2).clone();
    dn += &d.comp(0).multiply(pack0.ntop.comp(0));
    dn += &d.comp(1).multiply(pack0.ntop.comp(1));
    let n1v = pack0.ntop.comp(0).values();
    let n2v = pack0.ntop.comp(1).values();
    let mut inv_nsq = n1v.clone();
    for ((i, j), v) in inv_nsq.indexed_iter_mut() {
        *v = 1.0 / (1.0 + *v * *v + n2v[[i, j]] * n2v[[i, j]]);
    }
    let g_top = dn.mul_raw(&SurfaceField::from_values_raw(&grid, inv_nsq));

    // Neumann datum (grad_A0 p - F0) . nu = lap_A0 u0 . nu on the bottom;
    // with the divergence-form flux R0 u0 - F0 this becomes
    // (grad p + flux) . nu = (lap_A0 u0 + R0 u0) . nu.
    let r0u0 = pack0.rmat.as_ref().expect("pack built with deta_dt").apply(u0);
    let lap_u0 = SlabVectorField::new(std::array::from_fn(|c| pack0.lap_a(u0.comp(c))));
    let vec = &lap_u0 + &r0u0;
    let mut h_bot = vec.comp(2).trace_bottom();
    h_bot += &vec.comp(0).trace_bottom().mul_raw(pack0.nu_bottom.comp(0));
    h_bot += &vec.comp(1).trace_bottom().mul_raw(pack0.nu_bottom.comp(1));

    let flux = &r0u0 - &f0;
    let (p0, _) = solve_a_poisson_divergence_form(
        &pack0,
        &SlabField::zeros(&grid),
        &flux,
        &g_top,
        &h_bot,
        &opts.elliptic,
    )?;

    let dt_u0 = &(&lap_u0 - &pack0.grad_a(&p0)) + &f0;
    Ok(InitialData {
        u0: u0.clone(),
        eta0: eta0.clone(),
        deta_dt0,
        p0,
        dt_u0,
        compat_residual,
        pack0,
    })
}

/// Transport right-hand side `u3 - u1 d1 eta - u2 d2 eta`.
pub fn transport_rhs(eta: &SurfaceField, u: &SurfaceVectorField) -> SurfaceField {
    let mut rhs = u.comp(2).clone();
    rhs -= &u.comp(0).multiply(&eta.deriv(1));
    rhs -= &u.comp(1).multiply(&eta.deriv(2));
    rhs
}

/// Advances the kinematic surface equation with classical RK4. The velocity
/// trace is supplied as a function of time so stage times are exact.
pub fn solve_transport(
    eta0: &SurfaceField,
    velocity: &dyn Fn(f64) -> SurfaceVectorField,
    t0: f64,
    dt: f64,
    nsteps: usize,
) -> Result<SurfaceTrajectory> {
    assert!(dt > 0.0, "dt must be positive");
    let grid = eta0.grid().clone();
    let spec = grid.spec();
    let mode_density = (spec.n1 as f64 / spec.l1).max(spec.n2 as f64 / spec.l2);
    let mut eta = eta0.clone();
    let u_now = velocity(t0);
    let mut etas = vec![eta.clone()];
    let mut rates = vec![transport_rhs(&eta, &u_now)];
    for step in 0..nsteps {
        let t = t0 + step as f64 * dt;
        let u_start = velocity(t);
        let horizontal = u_start.comp(0).linf_norm().max(u_start.comp(1).linf_norm());
        let courant = dt * horizontal * mode_density;
        if courant >= 0.5 {
            return Err(SlabflowError::CflViolation { dt, courant });
        }
        let u_mid = velocity(t + 0.5 * dt);
        let u_end = velocity(t + dt);
        let k1 = transport_rhs(&eta, &u_start);
        let k2 = transport_rhs(&(&eta + &k1.scale(0.5 * dt)), &u_mid);
        let k3 = transport_rhs(&(&eta + &k2.scale(0.5 * dt)), &u_mid);
        let k4 = transport_rhs(&(&eta + &k3.scale(dt)), &u_end);
        let mut incr = k1;
        incr += &k2.scale(2.0);
        incr += &k3.scale(2.0);
        incr += &k4;
        eta = &eta + &incr.scale(dt / 6.0);
        etas.push(eta.clone());
        rates.push(transport_rhs(&eta, &u_end));
    }
    Ok(SurfaceTrajectory { t0, dt, eta: etas, deta_dt: rates })
}

/// Options for the window solver.
#[derive(Debug, Clone, Copy)]
pub struct WindowOpts {
    pub elliptic: DefectOpts,
}

impl Default for WindowOpts {
    fn default() -> Self {
        WindowOpts { elliptic: DefectOpts::default() }
    }
}

/// Backward-Euler window solve of the linear problem. Coefficients for step
/// `k` come from the supplied surface trajectory evaluated at the END time
/// of the step; `forcing(k)` must return `(F, H)` at that same time for
/// `k = 1..=nsteps`. The Jacobian floor `delta/2` is enforced at every step.
pub fn solve_linear_ns_window(
    surface: &SurfaceTrajectory,
    u0: &SlabVectorField,
    p0: &SlabField,
    forcing: &mut dyn FnMut(usize) -> (SlabVectorField, SurfaceVectorField),
    bottom: &BottomProfile,
    params: &ExtensionParams,
    opts: &WindowOpts,
) -> Result<Trajectory> {
    let grid = u0.grid().clone();
    let dt = surface.dt;
    let nsteps = surface.nsteps();
    let solver = FlatStokesSolver::new(&grid, 1.0 / dt)?;
    let mut states = vec![FlowState {
        t: surface.t0,
        u: u0.clone(),
        p: p0.clone(),
        eta: surface.eta[0].clone(),
    }];
    let mut step_diags = Vec::with_capacity(nsteps);
    for k in 1..=nsteps {
        let t = surface.t0 + k as f64 * dt;
        let pack = build_geometry(&surface.eta[k], Some(&surface.deta_dt[k]), bottom, params)?;
        let floor = params.delta / 2.0;
        if pack.min_j <= floor {
            return Err(SlabflowError::JacobianFloor { t, min_j: pack.min_j, floor });
        }
        let (f, h) = forcing(k);
        let rhs = StokesRHS {
            f: &f + &states[k - 1].u.scale(1.0 / dt),
            g: SlabField::zeros(&grid),
            h,
        };
        let (sol, sweeps) = solver.solve_a_stokes(&pack, &rhs, &opts.elliptic)?;
        let scale = rhs.scale();
        let div_residual = pack.div_a(&sol.u).linf_norm() / scale;
        let bottom_slip = sol.u.trace_bottom().linf_norm();
        step_diags.push(StepDiagnostics { t, div_residual, bottom_slip, sweeps, min_j: pack.min_j });
        states.push(FlowState { t, u: sol.u, p: sol.p, eta: surface.eta[k].clone() });
    }
    Ok(Trajectory { t0: surface.t0, dt, states, step_diags })
}

/// Weighted kinetic energy `1/2 int_Omega J |u|^2` (exact pointwise `J`
/// weighting, Clenshaw-Curtis x trapezoid quadrature).
pub fn kinetic_energy(pack: &GeometryPack, u: &SlabVectorField) -> f64 {
    let mut density = u.comp(0).values().clone();
    for ((i, j, k), v) in density.indexed_iter_mut() {
        let u2 = u.comp(1).values()[[i, j, k]];
        let u3 = u.comp(2).values()[[i, j, k]];
        *v = 0.5 * pack.jac.values()[[i, j, k]] * (*v * *v + u2 * u2 + u3 * u3);
    }
    SlabField::from_values_raw(pack.grid(), density).integral()
}
