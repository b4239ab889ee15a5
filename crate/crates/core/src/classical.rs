//! Relativistic transverse dynamics in the light-front parameter xi.
//!
//! With p(xi) = lambda - g(xi) playing the role of a momentum-like weight,
//! the equations of motion reduce to a driven linear system for the
//! transverse position v = (x, y),
//!
//!   p v'' = (r + H' E) v + 2 H E v' + F' - p' v',      E = [[0,1],[-1,0]],
//!
//! together with an algebraic slope for the longitudinal coordinate,
//!
//!   z' = (m^2 / p^2 + v'.v' - 1) / 2.
//!
//! Conservation of lambda and the mass-shell relation are tracked as
//! per-step diagnostics; the once-integrated momentum balance
//! p v' + (f - H E) v + chi is checked against a transport solution.

use nalgebra::{Matrix2, SVector, Vector2};

use crate::error::{Error, Result};
use crate::fields::FieldProfile;
use crate::ode::{self, Options as OdeOptions, StepControl};
use crate::quad::{self, QuadOptions};
use crate::riccati::RiccatiSolution;

/// |p| below this is treated as a turning point of the parameterization.
pub const EPS_TURNING: f64 = 1e-12;

/// The antisymmetric unit E = [[0, 1], [-1, 0]].
pub(crate) fn antisym() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

pub(crate) fn checked_p(profile: &FieldProfile, lambda: f64, xi: f64) -> Result<f64> {
    let p = profile.p(lambda, xi)?;
    if p.abs() < EPS_TURNING {
        return Err(Error::TurningPoint { xi, threshold: EPS_TURNING });
    }
    Ok(p)
}

/// Snapshot of the reduced dynamical state at one xi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub xi: f64,
    pub v: Vector2<f64>,
    pub v_prime: Vector2<f64>,
    pub z: f64,
    /// Longitudinal slope, carried with the state so the conservation
    /// diagnostics can detect a tuple that has drifted off shell.
    pub z_prime: f64,
}

impl TrajectoryState {
    /// Builds a state whose z' satisfies the longitudinal constraint.
    pub fn on_shell(
        profile: &FieldProfile,
        lambda: f64,
        xi: f64,
        v: Vector2<f64>,
        v_prime: Vector2<f64>,
        z: f64,
    ) -> Result<Self> {
        let p = checked_p(profile, lambda, xi)?;
        let z_prime = z_slope(profile.m, p, &v_prime);
        Ok(TrajectoryState { xi, v, v_prime, z, z_prime })
    }

    pub fn is_finite(&self) -> bool {
        self.xi.is_finite()
            && self.v.iter().all(|c| c.is_finite())
            && self.v_prime.iter().all(|c| c.is_finite())
            && self.z.is_finite()
            && self.z_prime.is_finite()
    }

    /// Lab-frame coordinate time x0 = xi + z.
    pub fn lab_time(&self) -> f64 {
        self.xi + self.z
    }
}

fn z_slope(m: f64, p: f64, v_prime: &Vector2<f64>) -> f64 {
    ((m / p) * (m / p) + v_prime.dot(v_prime) - 1.0) / 2.0
}

/// Right-hand side of the reduced equations: (v', v'', z').
pub fn derivatives(
    profile: &FieldProfile,
    lambda: f64,
    state: &TrajectoryState,
) -> Result<(Vector2<f64>, Vector2<f64>, f64)> {
    let xi = state.xi;
    let p = checked_p(profile, lambda, xi)?;
    let r = profile.r_matrix(xi)?;
    let h = profile.h.value(xi)?;
    let h_prime = profile.h.derivative(xi)?;
    let f_prime = profile.f_prime_vec(xi)?;
    let p_prime = profile.p_prime(xi)?;
    let e = antisym();

    let v_pp = (r * state.v
        + e * state.v * h_prime
        + e * state.v_prime * (2.0 * h)
        + f_prime
        - state.v_prime * p_prime)
        / p;
    Ok((state.v_prime, v_pp, z_slope(profile.m, p, &state.v_prime)))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub lambda: f64,
    pub states: Vec<TrajectoryState>,
    /// |reconstructed lambda - lambda| at each state.
    pub lambda_residuals: Vec<f64>,
    /// |(u0)^2 - u.u - 1| at each state.
    pub mass_shell_residuals: Vec<f64>,
    /// Set when integration stopped early at an escape radius.
    pub escaped: bool,
}

impl Trajectory {
    pub fn max_lambda_residual(&self) -> f64 {
        self.lambda_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_mass_shell_residual(&self) -> f64 {
        self.mass_shell_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> &TrajectoryState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// CSV export: one row per state, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("xi,x,y,x_prime,y_prime,z,t,lambda_residual,mass_shell_residual\n");
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                s.xi,
                s.v.x,
                s.v.y,
                s.v_prime.x,
                s.v_prime.y,
                s.z,
                s.lab_time(),
                self.lambda_residuals[i],
                self.mass_shell_residuals[i],
            ));
        }
        out
    }

    /// JSON export with the same columns and precision as the CSV.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str(&format!("  \"lambda\": {:.16e},\n", self.lambda));
        out.push_str(&format!("  \"escaped\": {},\n", self.escaped));
        out.push_str("  \"states\": [\n");
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"xi\": {:.16e}, \"x\": {:.16e}, \"y\": {:.16e}, \"x_prime\": {:.16e}, \"y_prime\": {:.16e}, \"z\": {:.16e}, \"t\": {:.16e}, \"lambda_residual\": {:.16e}, \"mass_shell_residual\": {:.16e}}}{}\n",
                s.xi,
                s.v.x,
                s.v.y,
                s.v_prime.x,
                s.v_prime.y,
                s.z,
                s.lab_time(),
                self.lambda_residuals[i],
                self.mass_shell_residuals[i],
                if i + 1 < self.states.len() { "," } else { "" },
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }
}

fn state_from_vec(
    profile: &FieldProfile,
    lambda: f64,
    xi: f64,
    y: &SVector<f64, 5>,
) -> Result<TrajectoryState> {
    let p = checked_p(profile, lambda, xi)?;
    let v_prime = Vector2::new(y[2], y[3]);
    Ok(TrajectoryState {
        xi,
        v: Vector2::new(y[0], y[1]),
        v_prime,
        z: y[4],
        z_prime: z_slope(profile.m, p, &v_prime),
    })
}

/// Integrates the reduced equations over xi_span starting from init's
/// (v, v', z). init.xi must equal the span start.
pub fn integrate(
    profile: &FieldProfile,
    lambda: f64,
    init: &TrajectoryState,
    xi_span: (f64, f64),
    rtol: f64,
    atol: f64,
) -> Result<Trajectory> {
    integrate_bounded(profile, lambda, init, xi_span, rtol, atol, None)
}

/// Like `integrate`, but stops cleanly once |v| reaches `escape_radius`
/// (used by the stability sweeps, where unstable amplitudes grow by
/// hundreds of e-foldings over the window).
pub fn integrate_bounded(
    profile: &FieldProfile,
    lambda: f64,
    init: &TrajectoryState,
    xi_span: (f64, f64),
    rtol: f64,
    atol: f64,
    escape_radius: Option<f64>,
) -> Result<Trajectory> {
    if !init.is_finite() {
        return Err(Error::Invalid("initial state has non-finite entries".into()));
    }
    let scale = xi_span.0.abs().max(xi_span.1.abs()).max(1.0);
    if (init.xi - xi_span.0).abs() > 1e-12 * scale {
        return Err(Error::Invalid(format!(
            "initial state at xi = {} does not sit on the span start {}",
            init.xi, xi_span.0
        )));
    }
    if xi_span.1 <= xi_span.0 {
        return Err(Error::Invalid("xi must increase along a trajectory".into()));
    }

    let y0 = SVector::<f64, 5>::from([init.v.x, init.v.y, init.v_prime.x, init.v_prime.y, init.z]);
    let rhs = |xi: f64, y: &SVector<f64, 5>| -> Result<SVector<f64, 5>> {
        let s = state_from_vec(profile, lambda, xi, y)?;
        let (vp, vpp, zp) = derivatives(profile, lambda, &s)?;
        Ok(SVector::<f64, 5>::from([vp.x, vp.y, vpp.x, vpp.y, zp]))
    };

    let opts = OdeOptions { rtol, atol, ..OdeOptions::default() };
    let sol = ode::solve(rhs, xi_span, y0, &opts, |view| {
        if let Some(radius) = escape_radius {
            let n = (view.y1[0] * view.y1[0] + view.y1[1] * view.y1[1]).sqrt();
            if n >= radius {
                return Ok(StepControl::Stop);
            }
        }
        Ok(StepControl::Continue)
    })?;

    let mut states = Vec::with_capacity(sol.xs.len());
    let mut lam_res = Vec::with_capacity(sol.xs.len());
    let mut shell_res = Vec::with_capacity(sol.xs.len());
    for (xi, y) in sol.xs.iter().zip(sol.ys.iter()) {
        let s = state_from_vec(profile, lambda, *xi, y)?;
        lam_res.push(lambda_residual(profile, lambda, &s)?);
        shell_res.push(mass_shell_residual(profile, lambda, &s)?);
        states.push(s);
    }
    Ok(Trajectory {
        lambda,
        states,
        lambda_residuals: lam_res,
        mass_shell_residuals: shell_res,
        escaped: sol.stopped_early,
    })
}

/// Reconstructs lambda from the kinematic tuple and returns the
/// discrepancy |lambda_rec - lambda|.
///
/// The four-velocity follows from d/ds = (p/m) d/dxi: u_perp = v' p / m,
/// u_z = z' p / m, u0 = sqrt(1 + u.u); then lambda_rec = m (u0 - u_z) + g.
pub fn lambda_residual(profile: &FieldProfile, lambda: f64, state: &TrajectoryState) -> Result<f64> {
    let p = checked_p(profile, lambda, state.xi)?;
    let g = profile.g.value(state.xi)?;
    let u_perp = state.v_prime * (p / profile.m);
    let u_z = state.z_prime * p / profile.m;
    let u0 = (1.0 + u_perp.dot(&u_perp) + u_z * u_z).sqrt();
    Ok((profile.m * (u0 - u_z) + g - lambda).abs())
}

/// Mass-shell defect |(u0)^2 - u.u - 1| with u0 reconstructed from the
/// coordinate-time slope: u0 = (1 + z') p / m.
pub fn mass_shell_residual(
    profile: &FieldProfile,
    lambda: f64,
    state: &TrajectoryState,
) -> Result<f64> {
    let p = checked_p(profile, lambda, state.xi)?;
    let u_perp = state.v_prime * (p / profile.m);
    let u_z = state.z_prime * p / profile.m;
    let u0 = (1.0 + state.z_prime) * p / profile.m;
    Ok((u0 * u0 - u_perp.dot(&u_perp) - u_z * u_z - 1.0).abs())
}

/// Proper time s = integral of m / p over [xi0, xi1]; p must be
/// single-signed there (quadrature nodes reject turning points).
pub fn proper_time(profile: &FieldProfile, lambda: f64, xi0: f64, xi1: f64) -> Result<f64> {
    let opts = QuadOptions {
        rtol: 1e-12,
        breakpoints: quad::oscillation_breakpoints(xi0, xi1, profile.max_omega(), 512),
        ..QuadOptions::default()
    };
    let r = quad::integrate(
        |xi| Ok(profile.m / checked_p(profile, lambda, xi)?),
        xi0,
        xi1,
        &opts,
    )?;
    Ok(r.value)
}

/// Lab-frame samples (t, x, y, z) along the trajectory; t = xi + z.
pub fn lab_frame(traj: &Trajectory) -> Vec<(f64, f64, f64, f64)> {
    traj.states
        .iter()
        .map(|s| (s.lab_time(), s.v.x, s.v.y, s.z))
        .collect()
}

/// The once-integrated momentum balance p v' + (f - H E) v + chi at one
/// state, using the transport solution's f and its chi for parameter k.
pub fn first_integral_vector(
    profile: &FieldProfile,
    lambda: f64,
    ric: &RiccatiSolution,
    k: &Vector2<f64>,
    state: &TrajectoryState,
) -> Result<Vector2<f64>> {
    let p = checked_p(profile, lambda, state.xi)?;
    let h = profile.h.value(state.xi)?;
    let f = ric.f_at(state.xi)?;
    let chi = ric.chi_at(state.xi, k)?;
    Ok(state.v_prime * p + (f - antisym() * h) * state.v + chi)
}

/// Max norm of the once-integrated balance along a trajectory. Zero (to
/// integrator tolerance) when k matches the trajectory's initial data.
pub fn first_integral_residual(
    profile: &FieldProfile,
    lambda: f64,
    traj: &Trajectory,
    ric: &RiccatiSolution,
    k: &Vector2<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in &traj.states {
        let r = first_integral_vector(profile, lambda, ric, k, s)?;
        worst = worst.max(r.norm());
    }
    Ok(worst)
}
