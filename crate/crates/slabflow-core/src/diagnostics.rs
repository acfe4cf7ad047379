//! Quantitative health reports: the discrete energy-identity residual, the
//! norm-equivalence (Korn-type) ratios, numerical verification of the
//! geometric and Poisson-extension lemmas, and the aggregated run report.
//!
//! Bound checks report *slack* (measured left side divided by the claimed
//! right side), never asserting unquantified constants; only exact
//! identities are expected to sit at round-off.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::evolution::{SurfaceTrajectory, Trajectory};
use crate::geometry::{
    build_geometry, poisson_extend, BottomProfile, ExtensionParams, GeometryPack,
};
use crate::iteration::{functionals, FunctionalRecord};
use crate::spectral::{Grid, SlabVectorField, SurfaceField, SurfaceVectorField};

/// Aggregated health report of one trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagnosticsReport {
    /// Relative defect of the discrete energy identity.
    pub energy_residual: f64,
    /// Minimum Jacobian over the window.
    pub min_j: f64,
    /// Worst relative divergence residual over the window.
    pub div_residual: f64,
    /// Worst bottom no-slip residual over the window.
    pub bottom_slip: f64,
    /// (min, max) of the viscous-dissipation / `H^1` quotient over random
    /// trial fields vanishing on the bottom.
    pub norm_equiv_ratios: (f64, f64),
    /// Named lemma residuals and bound slacks.
    pub lemma_checks: BTreeMap<String, f64>,
    /// Truncated functionals of the trajectory.
    pub functionals: FunctionalRecord,
}

/// Quadrature of a nodewise integrand over the flattened slab
/// (Clenshaw-Curtis in `x3`, trapezoid horizontally).
fn slab_integral(grid: &Grid, f: impl Fn(usize, usize, usize) -> f64) -> f64 {
    let spec = grid.spec();
    let wz = grid.wz();
    let wh = grid.horizontal_weight();
    let mut total = 0.0;
    for i in 0..spec.n1 {
        for j in 0..spec.n2 {
            for k in 0..spec.nz {
                total += f(i, j, k) * wz[k];
            }
        }
    }
    total * wh
}

/// `int_Omega J |u|^2`.
fn j_weighted_sq(pack: &GeometryPack, u: &SlabVectorField) -> f64 {
    let jv = pack.jac.values();
    let (u1, u2, u3) = (u.comp(0).values(), u.comp(1).values(), u.comp(2).values());
    slab_integral(u.grid(), |i, j, k| {
        jv[[i, j, k]]
            * (u1[[i, j, k]].powi(2) + u2[[i, j, k]].powi(2) + u3[[i, j, k]].powi(2))
    })
}

/// `int_Omega J |D_A u|^2` with the doubled symmetric gradient.
pub fn dissipation(pack: &GeometryPack, u: &SlabVectorField) -> f64 {
    let d = pack.sym_grad_a(u);
    let jv = pack.jac.values();
    let diag: Vec<_> = (0..3).map(|c| d.get(c, c).values()).collect();
    let off = [d.get(0, 1).values(), d.get(0, 2).values(), d.get(1, 2).values()];
    slab_integral(u.grid(), |i, j, k| {
        let mut s = 0.0;
        for c in 0..3 {
            s += diag[c][[i, j, k]].powi(2);
        }
        for o in &off {
            s += 2.0 * o[[i, j, k]].powi(2);
        }
        jv[[i, j, k]] * s
    })
}

/// Relative defect of the backward-Euler realization of the energy identity
///
/// ```text
/// 1/2 int J(T)|u(T)|^2 + 1/2 int_0^T int J |D_A u|^2
///   = 1/2 int J(0)|u0|^2 + 1/2 int_0^T int |u|^2 dt(J)
///     + int_0^T int J (F . u) - int_0^T int_Sigma H . u
/// ```
///
/// with rectangle quadrature at step end times (consistent with the
/// first-order stepper, so the defect is `O(dt)`). `f_traj` / `h_traj` hold
/// one entry per time node; the `k = 0` entries are unused.
pub fn energy_identity_residual(
    traj: &Trajectory,
    surface: &SurfaceTrajectory,
    bottom: &BottomProfile,
    params: &ExtensionParams,
    f_traj: &[SlabVectorField],
    h_traj: &[SurfaceVectorField],
) -> Result<f64> {
    let n = traj.states.len();
    assert!(n >= 2, "energy identity needs at least one step");
    assert_eq!(surface.eta.len(), n, "surface trajectory must share the time grid");
    assert_eq!(f_traj.len(), n, "forcing trajectory must share the time grid");
    assert_eq!(h_traj.len(), n, "stress trajectory must share the time grid");
    let dt = traj.dt;

    let pack0 = build_geometry(&surface.eta[0], Some(&surface.deta_dt[0]), bottom, params)?;
    let mut lhs = 0.0;
    let mut rhs = 0.5 * j_weighted_sq(&pack0, &traj.states[0].u);
    let mut pack_end = pack0;
    for k in 1..n {
        let pack = build_geometry(&surface.eta[k], Some(&surface.deta_dt[k]), bottom, params)?;
        let u = &traj.states[k].u;
        lhs += dt * 0.5 * dissipation(&pack, u);
        if let Some(dt_j) = &pack.dt_j {
            let djv = dt_j.values();
            let (u1, u2, u3) = (u.comp(0).values(), u.comp(1).values(), u.comp(2).values());
            rhs += dt
                * 0.5
                * slab_integral(u.grid(), |i, j, kk| {
                    djv[[i, j, kk]]
                        * (u1[[i, j, kk]].powi(2)
                            + u2[[i, j, kk]].powi(2)
                            + u3[[i, j, kk]].powi(2))
                });
        }
        let jv = pack.jac.values();
        let (f1, f2, f3) =
            (f_traj[k].comp(0).values(), f_traj[k].comp(1).values(), f_traj[k].comp(2).values());
        let (u1, u2, u3) = (u.comp(0).values(), u.comp(1).values(), u.comp(2).values());
        rhs += dt
            * slab_integral(u.grid(), |i, j, kk| {
                jv[[i, j, kk]]
                    * (f1[[i, j, kk]] * u1[[i, j, kk]]
                        + f2[[i, j, kk]] * u2[[i, j, kk]]
                        + f3[[i, j, kk]] * u3[[i, j, kk]])
            });
        rhs -= dt * h_traj[k].dot(&u.trace_top()).integral();
        pack_end = pack;
    }
    lhs += 0.5 * j_weighted_sq(&pack_end, &traj.states[n - 1].u);
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-14))
}

/// Random band-limited surface field with `|n|^{-4}` spectral decay.
fn decayed_random_surface(grid: &Grid, seed: u64) -> SurfaceField {
    let max_mode = (grid.spec().n1.min(grid.spec().n2) / 2).saturating_sub(1).max(1);
    let white = SurfaceField::random(grid, seed, max_mode, 1.0);
    let mut coeffs = white.spectral();
    for i in 0..grid.spec().n1 {
        for j in 0..grid.spec().n2 {
            let n = grid.abs_n(i, j);
            coeffs[[i, j]] *= (1.0 + n * n).powi(-2);
        }
    }
    SurfaceField::from_spectral(grid, coeffs)
}

/// Random slab trial field vanishing on the bottom: three decayed random
/// horizontal profiles times a linear vertical lift `(x3 + b0)`.
fn bottom_clamped_trial(grid: &Grid, seed: u64) -> SlabVectorField {
    let b0 = grid.spec().b0;
    let comps: Vec<_> = (0..3u64)
        .map(|c| {
            let h = decayed_random_surfaces_to_slab(grid, seed.wrapping_mul(3).wrapping_add(c));
            crate::spectral::SlabField::from_values(
                grid,
                ndarray::Array3::from_shape_fn(
                    (grid.spec().n1, grid.spec().n2, grid.spec().nz),
                    |(i, j, k)| h.values()[[i, j, k]] * (grid.x3()[k] + b0),
                ),
            )
        })
        .collect();
    SlabVectorField::new([comps[0].clone(), comps[1].clone(), comps[2].clone()])
}

fn decayed_random_surfaces_to_slab(grid: &Grid, seed: u64) -> crate::spectral::SlabField {
    // Two decayed horizontal profiles blended by a smooth vertical shape.
    let h0 = decayed_random_surface(grid, seed);
    let h1 = decayed_random_surface(grid, seed.wrapping_add(7919));
    let b0 = grid.spec().b0;
    crate::spectral::SlabField::from_values(
        grid,
        ndarray::Array3::from_shape_fn((grid.spec().n1, grid.spec().n2, grid.spec().nz), |(i, j, k)| {
            let s = (grid.x3()[k] + b0) / b0;
            h0.values()[[i, j]] * (1.0 - s) + h1.values()[[i, j]] * s * s
        }),
    )
}

/// Min and max of `int J |D_A u|^2 / |u|_{H^1}^2` over `samples` seeded
/// random band-limited trial fields vanishing on the bottom.
pub fn norm_equivalence_ratios(pack: &GeometryPack, samples: usize, seed: u64) -> (f64, f64) {
    assert!(samples >= 10, "need at least 10 samples, got {samples}");
    let grid = pack.grid();
    let mut low = f64::INFINITY;
    let mut high: f64 = 0.0;
    for s in 0..samples {
        let u = bottom_clamped_trial(grid, seed.wrapping_add(s as u64 * 104729));
        let den = u.sobolev_norm(1).powi(2);
        if den == 0.0 {
            continue;
        }
        let ratio = dissipation(pack, &u) / den;
        low = low.min(ratio);
        high = high.max(ratio);
    }
    (low, high)
}

/// Runs the named lemma/identity suite at the given grid and extension
/// parameters. Identities are reported as residuals (expected near zero);
/// inequalities are reported as slack `LHS / RHS` (expected `<= 1`);
/// `poisson6_slope` is the fitted log-log slope of `sup |d3 P^eps f|`
/// against `eps` (expected `1.00 +- 0.05`).
pub fn run_lemma_suite(
    params: &ExtensionParams,
    grid: &Grid,
    seed: u64,
) -> BTreeMap<String, f64> {
    use std::f64::consts::PI;
    let mut out = BTreeMap::new();
    let spec = grid.spec();
    let b0 = spec.b0;
    let bottom = BottomProfile::flat(grid);

    // Geometric identities, on flat geometry (expected at round-off) and on
    // a curved surface with a moving-boundary rate (spectral accuracy).
    let flat_eta = SurfaceField::zeros(grid);
    let flat_rate = SurfaceField::zeros(grid);
    let flat = build_geometry(&flat_eta, Some(&flat_rate), &bottom, params)
        .expect("flat geometry is nondegenerate");
    let rep = flat.verify_identities();
    out.insert("piola_flat".into(), rep.piola.iter().fold(0.0f64, |m, r| m.max(*r)));
    out.insert("surface_normal_flat".into(), rep.surface_normal);
    out.insert("bottom_normal_flat".into(), rep.bottom_normal);
    out.insert("r_identity_flat".into(), rep.r_identity.unwrap_or(0.0));

    let l1 = spec.l1;
    let eta = SurfaceField::from_fn(grid, |x1, _| 0.05 * (2.0 * PI * x1 / l1).cos());
    let rate = SurfaceField::from_fn(grid, |x1, _| 0.01 * (2.0 * PI * x1 / l1).cos());
    if let Ok(curved) = build_geometry(&eta, Some(&rate), &bottom, params) {
        let rep = curved.verify_identities();
        out.insert("piola_curved".into(), rep.piola.iter().fold(0.0f64, |m, r| m.max(*r)));
        out.insert("surface_normal_curved".into(), rep.surface_normal);
        out.insert("bottom_normal_curved".into(), rep.bottom_normal);
        out.insert("r_identity_curved".into(), rep.r_identity.unwrap_or(0.0));
    }

    // Poisson lemma (periodic case): |P^eps f|_{H^1}^2 <= (C/eps)
    // |f|_{H^{1/2}}^2 with C = pi (1 + b0), over seeded random decayed f.
    let c4 = PI * (1.0 + b0);
    let mut slack4: f64 = 0.0;
    let mut slack5: f64 = 0.0;
    for trial in 0..20u64 {
        let f = decayed_random_surface(grid, seed.wrapping_add(trial));
        let den_half = f.sobolev_norm(0.5).powi(2);
        let den_two = f.sobolev_norm(2.0).powi(2);
        if den_half == 0.0 {
            continue;
        }
        for &eps in &[0.01, 0.1, 1.0] {
            let p = poisson_extend(&f, eps);
            slack4 = slack4.max(p.sobolev_norm(1).powi(2) / (c4 / eps * den_half));
            // L-infinity lemma with q = 0, s = 2 and C = 2.
            slack5 = slack5.max(p.linf_norm().powi(2) / (2.0 * den_two));
        }
    }
    out.insert("poisson4_slack".into(), slack4);
    out.insert("poisson5_slack".into(), slack5);

    // Vertical-derivative scaling: log sup |d3 P^eps f| vs log eps for a
    // single-mode f; least-squares slope.
    let f1 = SurfaceField::from_fn(grid, |x1, _| (2.0 * PI * x1 / l1).cos());
    let epses = [0.01f64, 0.1, 1.0];
    let pts: Vec<(f64, f64)> = epses
        .iter()
        .map(|&e| (e.ln(), poisson_extend(&f1, e).deriv_z().linf_norm().ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    out.insert("poisson6_slope".into(), slope);

    // Korn-type quotient on the flat pack: positive lower ratio despite a
    // rigid-motion-like trial, thanks to the bottom clamping.
    let (low, _high) = norm_equivalence_ratios(&flat, 10, seed.wrapping_add(31337));
    out.insert("korn_flat_low".into(), low);
    let rigid = SlabVectorField::new([
        crate::spectral::SlabField::from_fn(grid, |_, _, x3| x3 + b0),
        crate::spectral::SlabField::zeros(grid),
        crate::spectral::SlabField::zeros(grid),
    ]);
    let rigid_ratio = dissipation(&flat, &rigid) / rigid.sobolev_norm(1).powi(2);
    out.insert("korn_rigid_ratio".into(), rigid_ratio);

    // Transport estimate slack: |eta(T)|_{H^3} against
    // exp(int |Du|_{3/2}) (|eta0|_{H^3} + int |u3|_{H^3}) with C = 1.
    let eta0 = SurfaceField::from_fn(grid, |x1, _| 0.1 * (2.0 * PI * x1 / l1).cos());
    let vel = SurfaceVectorField::new([
        SurfaceField::from_fn(grid, |x1, _| 0.05 * (2.0 * PI * x1 / l1).cos()),
        SurfaceField::zeros(grid),
        SurfaceField::from_fn(grid, |x1, _| 0.05 * (2.0 * PI * x1 / l1).sin()),
    ]);
    let t_end = 0.1;
    let nsteps = 20;
    if let Ok(sol) =
        crate::evolution::solve_transport(&eta0, &|_t| vel.clone(), 0.0, t_end / nsteps as f64, nsteps)
    {
        let du_32 = (vel.comp(0).deriv(1).sobolev_norm(1.5).powi(2)
            + vel.comp(0).deriv(2).sobolev_norm(1.5).powi(2)
            + vel.comp(1).deriv(1).sobolev_norm(1.5).powi(2)
            + vel.comp(1).deriv(2).sobolev_norm(1.5).powi(2))
        .sqrt();
        let bound = (t_end * du_32).exp()
            * (eta0.sobolev_norm(3.0) + t_end * vel.comp(2).sobolev_norm(3.0));
        let lhs = sol
            .eta
            .iter()
            .map(|e| e.sobolev_norm(3.0))
            .fold(0.0f64, f64::max);
        out.insert("transport_slack".into(), lhs / bound);
    }

    out
}

/// Assembles the full report for a trajectory produced by the window or
/// Picard solver.
pub fn build_report(
    traj: &Trajectory,
    surface: &SurfaceTrajectory,
    bottom: &BottomProfile,
    params: &ExtensionParams,
    f_traj: &[SlabVectorField],
    h_traj: &[SurfaceVectorField],
    seed: u64,
) -> Result<DiagnosticsReport> {
    let energy_residual =
        energy_identity_residual(traj, surface, bottom, params, f_traj, h_traj)?;
    let min_j = traj.step_diags.iter().map(|d| d.min_j).fold(f64::INFINITY, f64::min);
    let div_residual =
        traj.step_diags.iter().map(|d| d.div_residual).fold(0.0f64, f64::max);
    let bottom_slip = traj.step_diags.iter().map(|d| d.bottom_slip).fold(0.0f64, f64::max);
    let final_pack = build_geometry(
        surface.eta.last().expect("nonempty surface trajectory"),
        surface.deta_dt.last(),
        bottom,
        params,
    )?;
    let norm_equiv_ratios = norm_equivalence_ratios(&final_pack, 10, seed);
    let lemma_checks = run_lemma_suite(params, traj.states[0].u.grid(), seed);
    Ok(DiagnosticsReport {
        energy_residual,
        min_j: if min_j.is_finite() { min_j } else { final_pack.min_j },
        div_residual,
        bottom_slip,
        norm_equiv_ratios,
        lemma_checks,
        functionals: functionals(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::DefectOpts;
    use crate::evolution::{solve_linear_ns_window, FlowState, WindowOpts};
    use crate::spectral::{GridSpec, SlabField};
    use std::f64::consts::PI;

    fn grid(n1: usize, n2: usize, nz: usize) -> Grid {
        Grid::new(GridSpec { l1: 1.0, l2: 1.0, b0: 1.0, n1, n2, nz, dealias: false }).unwrap()
    }

    fn flat_params() -> ExtensionParams {
        ExtensionParams { epsilon: 1.0, delta: 0.5, c_poisson: 1.0 }
    }

    /// Runs the flat decaying-shear window and returns the energy residual.
    fn shear_energy_residual(g: &Grid, t_end: f64, dt: f64) -> f64 {
        let b0 = g.spec().b0;
        let u0 = SlabVectorField::new([
            SlabField::from_fn(g, |_, _, x3| (PI * (x3 + b0) / (2.0 * b0)).sin()),
            SlabField::zeros(g),
            SlabField::zeros(g),
        ]);
        let nsteps = (t_end / dt).round() as usize;
        let surface = SurfaceTrajectory::frozen(&SurfaceField::zeros(g), 0.0, dt, nsteps);
        let mut forcing =
            |_k: usize| (SlabVectorField::zeros(g), SurfaceVectorField::zeros(g));
        let bottom = BottomProfile::flat(g);
        let params = flat_params();
        let opts = WindowOpts { elliptic: DefectOpts::default() };
        let traj = solve_linear_ns_window(
            &surface,
            &u0,
            &SlabField::zeros(g),
            &mut forcing,
            &bottom,
            &params,
            &opts,
        )
        .unwrap();
        let zeros_f = vec![SlabVectorField::zeros(g); nsteps + 1];
        let zeros_h = vec![SurfaceVectorField::zeros(g); nsteps + 1];
        energy_identity_residual(&traj, &surface, &bottom, &params, &zeros_f, &zeros_h).unwrap()
    }

    #[test]
    fn energy_residual_zero_trajectory() {
        let g = grid(4, 4, 9);
        let dt = 0.01;
        let surface = SurfaceTrajectory::frozen(&SurfaceField::zeros(&g), 0.0, dt, 3);
        let traj = Trajectory {
            t0: 0.0,
            dt,
            states: (0..=3)
                .map(|k| FlowState {
                    t: k as f64 * dt,
                    u: SlabVectorField::zeros(&g),
                    p: SlabField::zeros(&g),
                    eta: SurfaceField::zeros(&g),
                })
                .collect(),
            step_diags: Vec::new(),
        };
        let zeros_f = vec![SlabVectorField::zeros(&g); 4];
        let zeros_h = vec![SurfaceVectorField::zeros(&g); 4];
        let r = energy_identity_residual(
            &traj,
            &surface,
            &BottomProfile::flat(&g),
            &flat_params(),
            &zeros_f,
            &zeros_h,
        )
        .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn energy_residual_shear_first_order_in_dt() {
        let g = grid(4, 4, 17);
        let t_end = 0.04;
        let r: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&dt| shear_energy_residual(&g, t_end, dt))
            .collect();
        assert!(r[2] < 1e-3, "residual at dt = 1e-3 too large: {}", r[2]);
        let order = ((r[0] / r[2]).ln() / 4.0f64.ln() + (r[0] / r[1]).ln() / 2.0f64.ln()) / 2.0;
        assert!((0.8..=1.2).contains(&order), "energy residual order {order}, residuals {r:?}");
    }

    #[test]
    fn norm_equivalence_flat_is_bracketed_and_positive() {
        let g = grid(8, 8, 9);
        let flat = build_geometry(
            &SurfaceField::zeros(&g),
            None,
            &BottomProfile::flat(&g),
            &flat_params(),
        )
        .unwrap();
        let (low, high) = norm_equivalence_ratios(&flat, 12, 42);
        assert!(low > 0.0 && low.is_finite());
        assert!(high >= low && high.is_finite());
    }

    /// Amplitude sweep. The upper quotient must grow with the surface
    /// amplitude (the lemma's bound degrades like `(1 + |eta0|_{5/2})^3`),
    /// while the coercive lower quotient must stay positive and bounded.
    /// Measurements show the lower quotient is stable-to-increasing for
    /// band-limited trials in this formulation (the perturbation terms add
    /// dissipation almost everywhere), so only its positivity is asserted.
    #[test]
    fn norm_equivalence_amplitude_trend() {
        let g = grid(8, 8, 9);
        let params = ExtensionParams { epsilon: 0.3, delta: 0.45, c_poisson: 1.0 };
        let bottom = BottomProfile::flat(&g);
        let ratios: Vec<(f64, f64)> = [0.0, 0.1, 0.2, 0.3]
            .iter()
            .map(|&a| {
                let eta = SurfaceField::from_fn(&g, |x1, _| a * (2.0 * PI * x1).cos());
                let pack = build_geometry(&eta, None, &bottom, &params).unwrap();
                norm_equivalence_ratios(&pack, 10, 42)
            })
            .collect();
        for w in ratios.windows(2) {
            assert!(w[1].1 >= w[0].1, "high ratio not growing: {ratios:?}");
        }
        for (low, _) in &ratios {
            assert!(*low > 0.0 && low.is_finite(), "degenerate low ratio: {ratios:?}");
        }
    }

    #[test]
    fn lemma_suite_flat_identities_at_roundoff() {
        let g = grid(16, 16, 13);
        let checks = run_lemma_suite(&flat_params(), &g, 7);
        for key in
            ["piola_flat", "surface_normal_flat", "bottom_normal_flat", "r_identity_flat"]
        {
            assert!(checks[key] <= 1e-10, "{key} = {}", checks[key]);
        }
    }

    #[test]
    fn lemma_suite_spec_grid_bounds() {
        let g = grid(32, 32, 17);
        let params = ExtensionParams { epsilon: 0.3, delta: 0.45, c_poisson: 1.0 };
        let checks = run_lemma_suite(&params, &g, 7);
        assert!(checks["piola_curved"] < 1e-8, "piola: {}", checks["piola_curved"]);
        assert!(checks["surface_normal_curved"] < 1e-12);
        assert!(checks["poisson4_slack"] <= 1.0, "slack4: {}", checks["poisson4_slack"]);
        assert!(checks["poisson5_slack"] <= 1.0, "slack5: {}", checks["poisson5_slack"]);
        assert!(
            (checks["poisson6_slope"] - 1.0).abs() <= 0.05,
            "slope: {}",
            checks["poisson6_slope"]
        );
        assert!(checks["korn_flat_low"] > 0.0);
        assert!(checks["korn_rigid_ratio"] > 0.0);
        assert!(checks["transport_slack"] <= 1.0, "transport: {}", checks["transport_slack"]);
    }

    #[test]
    fn lemma_suite_is_bit_stable_for_fixed_seed() {
        let g = grid(8, 8, 9);
        let a = run_lemma_suite(&flat_params(), &g, 99);
        let b = run_lemma_suite(&flat_params(), &g, 99);
        assert_eq!(a, b);
        let (l1, h1) = norm_equivalence_ratios(
            &build_geometry(
                &SurfaceField::zeros(&g),
                None,
                &BottomProfile::flat(&g),
                &flat_params(),
            )
            .unwrap(),
            10,
            99,
        );
        let (l2, h2) = norm_equivalence_ratios(
            &build_geometry(
                &SurfaceField::zeros(&g),
                None,
                &BottomProfile::flat(&g),
                &flat_params(),
            )
            .unwrap(),
            10,
            99,
        );
        assert!(l1 == l2 && h1 == h2);
    }
}
