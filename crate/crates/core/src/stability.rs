//! Beam-guide stability of crossed-field configurations.
//!
//! For profiles with no longitudinal electric field (g' = 0) and no
//! longitudinal magnetic field (H = 0), the transverse drift reduces to
//! motion in the effective potential
//!
//!   U(xi, x, y) = x F1' + y F2' - (1/2)(r11 x^2 + 2 r12 x y + r22 y^2),
//!
//! with lambda acting as the effective mass. A rotating quadratic
//! profile (constants c1, c2, rotation rate omega, normalized by lambda)
//! becomes autonomous in the frame rotating at omega xi / 2, where the
//! linearization has the constant matrix
//!
//!   Xi = [[0, I], [(c1 + omega^2/4) I + c2 sigma3, omega E]],
//!
//! whose eigenvalues are
//!
//!   lambda_k = +-(1/2) sqrt(4 c1 - omega^2 +- 4 sqrt(c2^2 - omega^2 c1)).
//!
//! Verdicts follow the Lyapunov conditions (all real parts <= 0; purely
//! imaginary roots simple), cross-checked by brute-force Floquet
//! monodromy of the periodic system.

use nalgebra::{Matrix2, Matrix4, SVector, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::FieldProfile;
use crate::ode::{self, Options as OdeOptions, StepControl};
use crate::riccati::rot;

/// Absolute tolerance for "zero real part" and root-simplicity tests.
pub const ROOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    /// All real parts vanish but a marginal root is repeated: linear
    /// theory admits secular growth and gives no confinement verdict.
    MarginalDegenerate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::MarginalDegenerate => "marginal-degenerate",
        })
    }
}

/// A crossed-field profile admitted to the effective-potential reduction:
/// g' = 0 and H = 0 structurally, with lambda the effective mass.
#[derive(Debug, Clone)]
pub struct EffectivePotentialSpec {
    pub profile: FieldProfile,
    pub lambda: f64,
}

impl EffectivePotentialSpec {
    pub fn new(profile: FieldProfile, lambda: f64) -> Result<Self> {
        if !profile.g.is_constant() {
            return Err(Error::Invalid(
                "effective-potential reduction requires g' = 0 (no longitudinal electric field)"
                    .into(),
            ));
        }
        if !profile.h.is_zero() {
            return Err(Error::Invalid(
                "effective-potential reduction requires H = 0 (no longitudinal magnetic field)"
                    .into(),
            ));
        }
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::Invalid(format!("effective mass lambda invalid: {lambda}")));
        }
        Ok(EffectivePotentialSpec { profile, lambda })
    }

    /// U(xi, x, y) = x F1' + y F2' - (1/2) (r11 x^2 + 2 r12 xy + r22 y^2).
    pub fn effective_potential(&self, xi: f64, x: f64, y: f64) -> Result<f64> {
        let fp = self.profile.f_prime_vec(xi)?;
        Ok(x * fp.x + y * fp.y - 0.5 * self.profile.quadratic_form(xi, x, y)?)
    }
}

/// Location of the static minimum of U = x C1 + y C2 - (1/2) v.R v,
/// which exists iff R is negative definite (R11 < 0 and det R > 0):
/// (x0, y0) = ((R22 C1 - R12 C2)/det R, (R11 C2 - R12 C1)/det R).
pub fn static_minimum(r11: f64, r12: f64, r22: f64, c1: f64, c2: f64) -> Option<(f64, f64)> {
    let det = r11 * r22 - r12 * r12;
    if r11 < 0.0 && det > 0.0 {
        Some(((r22 * c1 - r12 * c2) / det, (r11 * c2 - r12 * c1) / det))
    } else {
        None
    }
}

/// Frame rotating with the quadratic profile: rotation by omega xi / 2.
pub fn rotating_frame(omega: f64, xi: f64) -> Matrix2<f64> {
    rot(omega * xi / 2.0)
}

/// Residual quadratic potential in the rotating frame:
/// U~ = -(1/2)[(x~^2 + y~^2) C1 + (x~^2 - y~^2) C2].
pub fn rotated_potential(c1: f64, c2: f64, xt: f64, yt: f64) -> f64 {
    -0.5 * ((xt * xt + yt * yt) * c1 + (xt * xt - yt * yt) * c2)
}

/// Constant rotating-frame matrix for the first-order system
/// (v~, v~')' = Xi (v~, v~'). Its eigenvalues are the closed-form roots;
/// it is kept as an independent oracle against transcription slips.
pub fn xi_tilde_matrix(c1: f64, c2: f64, omega: f64) -> Matrix4<f64> {
    let k = c1 + omega * omega / 4.0;
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        k + c2, 0.0, 0.0, omega,
        0.0, k - c2, -omega, 0.0,
    )
}

/// Characteristic roots of the rotating-frame linearization,
/// lambda = +-(1/2) sqrt(4 c1 - omega^2 +- 4 sqrt(c2^2 - omega^2 c1)),
/// as (root, -root, root, -root) pairs. Constants are the ones of the
/// normalized oscillator v'' = M v (profile amplitudes divided by the
/// effective mass lambda).
pub fn characteristic_roots(c1: f64, c2: f64, omega: f64) -> [Complex64; 4] {
    let inner = Complex64::new(c2 * c2 - omega * omega * c1, 0.0).sqrt();
    let base = Complex64::new(4.0 * c1 - omega * omega, 0.0);
    let plus = 0.5 * (base + 4.0 * inner).sqrt();
    let minus = 0.5 * (base - 4.0 * inner).sqrt();
    [plus, -plus, minus, -minus]
}

/// Lyapunov classification of a root set: unstable if any real part
/// exceeds tol; otherwise stable when every (necessarily marginal) root
/// is simple, and marginal-degenerate when a marginal root repeats.
pub fn lyapunov_verdict(roots: &[Complex64; 4], tol: f64) -> Verdict {
    if roots.iter().any(|r| r.re > tol) {
        return Verdict::Unstable;
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (roots[i] - roots[j]).norm() <= tol {
                return Verdict::MarginalDegenerate;
            }
        }
    }
    Verdict::Stable
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub roots: [Complex64; 4],
    pub verdict: Verdict,
    /// Largest real part among the roots (0 at marginal stability).
    pub margin: f64,
    /// Threshold rotation rate for the vortex family, when applicable.
    pub threshold_data: Option<f64>,
}

/// Report for normalized oscillator constants (c1, c2) and rate omega.
pub fn report(c1: f64, c2: f64, omega: f64) -> StabilityReport {
    let roots = characteristic_roots(c1, c2, omega);
    StabilityReport {
        roots,
        verdict: lyapunov_verdict(&roots, ROOT_TOL),
        margin: roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max),
        threshold_data: None,
    }
}

/// Minimal rotation rate confining the rotating saddle of amplitude
/// B0: omega_min = 4 |B0| / lambda; rates at or above it are stable.
pub fn vortex_threshold(b0: f64, lambda: f64) -> f64 {
    assert!(lambda != 0.0, "effective mass lambda must be nonzero");
    4.0 * b0.abs() / lambda
}

/// Report for the rotating-saddle family: c1 = 0, c2 = B0 omega / lambda,
/// with the threshold attached.
pub fn vortex_report(b0: f64, omega: f64, lambda: f64) -> StabilityReport {
    let mut rep = report(0.0, b0 * omega / lambda, omega);
    rep.threshold_data = Some(vortex_threshold(b0, lambda));
    rep
}

// ---------------------------------------------------------------------------
// Floquet cross-check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FloquetResult {
    pub multipliers: [Complex64; 4],
    pub verdict: Verdict,
}

/// Monodromy matrix of v'' = M(xi) v over one period, from identity
/// initial data for the 4x4 first-order system (v, v')' = [[0,I],[M,0]].
pub fn monodromy<F>(m_of_xi: F, period: f64) -> Result<Matrix4<f64>>
where
    F: Fn(f64) -> Matrix2<f64>,
{
    let opts = OdeOptions { rtol: 1e-11, atol: 1e-13, ..OdeOptions::default() };
    let mut y0 = SVector::<f64, 16>::zeros();
    for c in 0..4 {
        y0[4 * c + c] = 1.0; // identity, column-stacked
    }
    let sol = ode::solve(
        |xi, y: &SVector<f64, 16>| {
            let m = m_of_xi(xi);
            let mut dy = SVector::<f64, 16>::zeros();
            for c in 0..4 {
                let (v1, v2, w1, w2) = (y[4 * c], y[4 * c + 1], y[4 * c + 2], y[4 * c + 3]);
                dy[4 * c] = w1;
                dy[4 * c + 1] = w2;
                dy[4 * c + 2] = m[(0, 0)] * v1 + m[(0, 1)] * v2;
                dy[4 * c + 3] = m[(1, 0)] * v1 + m[(1, 1)] * v2;
            }
            Ok(dy)
        },
        (0.0, period),
        y0,
        &opts,
        |_view| Ok(StepControl::Continue),
    )?;
    let yf = sol.ys.last().unwrap();
    let mut phi = Matrix4::zeros();
    for c in 0..4 {
        for r in 0..4 {
            phi[(r, c)] = yf[4 * c + r];
        }
    }
    Ok(phi)
}

/// Brute-force stability verdict from the monodromy multipliers:
/// unstable if any |mu| > 1 + tol; otherwise stable when unit-modulus
/// multipliers are simple, marginal-degenerate when one repeats.
pub fn floquet_verdict<F>(m_of_xi: F, period: f64, tol: f64) -> Result<FloquetResult>
where
    F: Fn(f64) -> Matrix2<f64>,
{
    let phi = monodromy(m_of_xi, period)?;
    let eig = phi.complex_eigenvalues();
    let multipliers = [eig[0], eig[1], eig[2], eig[3]];
    if multipliers.iter().any(|m| m.norm() > 1.0 + tol) {
        return Ok(FloquetResult { multipliers, verdict: Verdict::Unstable });
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (multipliers[i] - multipliers[j]).norm() <= tol {
                return Ok(FloquetResult { multipliers, verdict: Verdict::MarginalDegenerate });
            }
        }
    }
    Ok(FloquetResult { multipliers, verdict: Verdict::Stable })
}

/// The periodic oscillator matrix M(xi) = c1 I + c2 (sigma . l)(omega xi)
/// whose rotating-frame reduction has the Xi-matrix above.
pub fn rotating_oscillator_matrix(c1: f64, c2: f64, omega: f64) -> impl Fn(f64) -> Matrix2<f64> {
    move |xi: f64| {
        let (s, c) = (omega * xi).sin_cos();
        Matrix2::new(c1 + c2 * c, c2 * s, c2 * s, c1 - c2 * c)
    }
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct MapRow {
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_re_lambda: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct StabilityMap {
    pub rows: Vec<MapRow>,
}

impl StabilityMap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,c1,c2,max_re_lambda,verdict\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.omega, r.c1, r.c2, r.max_re_lambda, r.verdict
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n  \"rows\": [\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"omega\": {:.16e}, \"c1\": {:.16e}, \"c2\": {:.16e}, \"max_re_lambda\": {:.16e}, \"verdict\": \"{}\"}}{}\n",
                r.omega, r.c1, r.c2, r.max_re_lambda, r.verdict,
                if i + 1 < self.rows.len() { "," } else { "" }
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }
}

fn classify_cell(omega: f64, c1: f64, c2: f64) -> MapRow {
    let rep = report(c1, c2, omega);
    MapRow { omega, c1, c2, max_re_lambda: rep.margin, verdict: rep.verdict }
}

/// Cartesian sweep over normalized (omega, c1, c2); rows in grid order
/// (omega outermost), evaluated in parallel.
pub fn stability_map(omegas: &[f64], c1s: &[f64], c2s: &[f64]) -> StabilityMap {
    let cells: Vec<(f64, f64, f64)> = omegas
        .iter()
        .flat_map(|&w| c1s.iter().flat_map(move |&a| c2s.iter().map(move |&b| (w, a, b))))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(w, a, b)| classify_cell(w, a, b))
        .collect();
    StabilityMap { rows }
}

/// Vortex-family sweep: c1 = 0 and c2 = B0 omega / lambda per cell.
pub fn vortex_map(omegas: &[f64], b0s: &[f64], lambda: f64) -> StabilityMap {
    let cells: Vec<(f64, f64)> = omegas
        .iter()
        .flat_map(|&w| b0s.iter().map(move |&b| (w, b)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(w, b0)| classify_cell(w, 0.0, b0 * w / lambda))
        .collect();
    StabilityMap { rows }
}
