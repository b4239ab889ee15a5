//! Exact relativistic wave functions on null planes.
//!
//! Scalar modes take the form
//!
//!   Phi = N0 p^{-1/2}(xi) sqrt(Delta(xi)) exp(i S),
//!
//! where S is the action produced by the transport layer, Delta is the
//! determinant of the chi-basis matrix B = [chi(1) | chi(2)], and
//! N0 = (32 pi^3)^{-1/2}. Spinor modes add a unitary rotation V(xi) of a
//! constant spin-label spinor V0 and the linear form (digamma) built
//! from f, chi, and H:
//!
//!   Psi = N p^{-1} sqrt(Delta) e^{iS} [ (m + p - s3 (sigma.digamma)) V ;
//!                                       ((m - p) s3 - (sigma.digamma)) V ].
//!
//! Orthonormality lives on planes of constant xi. The continuum modes
//! are delta-normalized, so all checks here run through Gaussian wave
//! packets: finite superpositions over (lambda, k1, k2) whose inner
//! products are finite integrals over (eta, x, y). The eta integral of a
//! mode pair is elementary and is done in closed form; the transverse
//! integral uses fixed-order tensor Gauss-Legendre grids so results are
//! deterministic.
//!
//! Branch convention: the principal complex square root is used for
//! both sqrt(Delta) and p^{-1/2} (negative p gives -i |p|^{-1/2}).
//! Within one transport solution Delta and p cannot cross zero (the
//! transport layer refuses caustics and turning points), so the
//! principal branch is automatically continuous along xi; the signs at
//! any xi are reported by `WaveData::branch_info`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::coords::NullEvent;
use crate::error::{Error, Result};
use crate::fields::FieldProfile;
use crate::quad::{composite_gauss_legendre, gauss_legendre_on};
use crate::riccati::{rot, RiccatiOptions, RiccatiSolution, ZSeed};

/// Mode normalization (32 pi^3)^{-1/2}, shared by the scalar and spinor
/// families.
pub fn normalization() -> f64 {
    1.0 / (32.0 * PI.powi(3)).sqrt()
}

fn cis(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

/// The labels of one continuum mode: the null-plane energy lambda, the
/// two transverse separation constants, and (for spinor modes) the spin
/// label zeta = +-1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumNumbers {
    pub lambda: f64,
    pub k1: f64,
    pub k2: f64,
    pub zeta: i8,
}

impl QuantumNumbers {
    pub fn new(lambda: f64, k1: f64, k2: f64, zeta: i8) -> Result<Self> {
        if zeta != 1 && zeta != -1 {
            return Err(Error::Invalid(format!("spin label must be +1 or -1, got {zeta}")));
        }
        Ok(QuantumNumbers { lambda, k1, k2, zeta })
    }

    /// Scalar modes carry no spin label; +1 is stored as a placeholder.
    pub fn scalar(lambda: f64, k1: f64, k2: f64) -> Self {
        QuantumNumbers { lambda, k1, k2, zeta: 1 }
    }

    pub fn k(&self) -> Vector2<f64> {
        Vector2::new(self.k1, self.k2)
    }
}

/// The sigma3 eigenvectors labeling the two spin states: (1,0) for
/// zeta = +1 and (0,1) for zeta = -1. They are orthonormal and complete.
pub fn v0(zeta: i8) -> Vector2<f64> {
    if zeta >= 0 {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    }
}

/// Determinant of the basis matrix with the given columns; swapping the
/// columns flips the sign.
pub fn basis_determinant(col1: &Vector2<f64>, col2: &Vector2<f64>) -> f64 {
    col1.x * col2.y - col1.y * col2.x
}

/// sigma . F for a transverse vector (F1, F2, 0):
/// [[0, F1 - i F2], [F1 + i F2, 0]].
fn sigma_dot(f: &Vector2<f64>) -> Matrix2<Complex64> {
    let off = Complex64::new(f.x, -f.y);
    Matrix2::new(Complex64::new(0.0, 0.0), off, off.conj(), Complex64::new(0.0, 0.0))
}

fn sigma3_c() -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(-1.0, 0.0),
    )
}

/// The null-plane projector (1/2)(1 - alpha3) in block form
/// (1/2) [[I, -s3], [-s3, I]].
pub fn projector_minus_matrix() -> SMatrix<Complex64, 4, 4> {
    let z = Complex64::new(0.0, 0.0);
    let h = Complex64::new(0.5, 0.0);
    let mh = Complex64::new(-0.5, 0.0);
    SMatrix::<Complex64, 4, 4>::from_row_slice(&[
        h, z, mh, z, //
        z, h, z, h, //
        mh, z, h, z, //
        z, h, z, h,
    ])
}

/// Applies the null-plane projector to a 4-spinor.
pub fn projector_minus(psi: &SVector<Complex64, 4>) -> SVector<Complex64, 4> {
    projector_minus_matrix() * psi
}

/// A transport solution packaged for wavefunction evaluation.
#[derive(Debug)]
pub struct WaveData {
    pub riccati: RiccatiSolution,
}

impl WaveData {
    pub fn new(riccati: RiccatiSolution) -> Self {
        WaveData { riccati }
    }

    /// The basis matrix B(xi) = [chi(1) | chi(2)].
    pub fn b_matrix(&self, xi: f64) -> Result<Matrix2<f64>> {
        let (c1, c2) = self.riccati.chi_basis_at(xi)?;
        Ok(Matrix2::new(c1.x, c2.x, c1.y, c2.y))
    }

    /// Delta(xi) = det B computed from the chi-basis columns
    /// (independently of the transport identity Delta = 1/det Z).
    pub fn delta_fn(&self, xi: f64) -> Result<f64> {
        let (c1, c2) = self.riccati.chi_basis_at(xi)?;
        Ok(basis_determinant(&c1, &c2))
    }

    /// Principal square root of Delta (imaginary for negative Delta).
    pub fn sqrt_delta(&self, xi: f64) -> Result<Complex64> {
        Ok(Complex64::new(self.delta_fn(xi)?, 0.0).sqrt())
    }

    /// Principal p^{-1/2}: 1/sqrt(p) for p > 0 and -i |p|^{-1/2} for
    /// p < 0. Refuses turning points.
    pub fn p_inv_sqrt(&self, xi: f64) -> Result<Complex64> {
        let p = self.riccati.p_at(xi)?;
        Ok(Complex64::new(p, 0.0).sqrt().inv())
    }

    /// Branch metadata: (sign of p, sign of Delta) at xi. Both signs are
    /// constant across a transport solution's span.
    pub fn branch_info(&self, xi: f64) -> Result<(i8, i8)> {
        let p = self.riccati.p_at(xi)?;
        let d = self.delta_fn(xi)?;
        Ok((if p >= 0.0 { 1 } else { -1 }, if d >= 0.0 { 1 } else { -1 }))
    }

    fn check_lambda(&self, qn: &QuantumNumbers) -> Result<()> {
        if qn.lambda != self.riccati.lambda {
            return Err(Error::Invalid(format!(
                "mode lambda {} does not match the transport solution's lambda {}",
                qn.lambda, self.riccati.lambda
            )));
        }
        Ok(())
    }

    /// Scalar mode Phi = N0 p^{-1/2} sqrt(Delta) exp(i S).
    pub fn kg_wavefunction(&self, qn: &QuantumNumbers, event: &NullEvent) -> Result<Complex64> {
        self.check_lambda(qn)?;
        let s = self.riccati.action_at(&qn.k(), event)?;
        Ok(normalization() * self.p_inv_sqrt(event.xi)? * self.sqrt_delta(event.xi)? * cis(s))
    }

    /// Spin rotation V(xi) = [cos T + i s3 sin T] V0(zeta)
    /// = exp(i zeta T) V0(zeta).
    pub fn spinor_v(&self, qn: &QuantumNumbers, xi: f64) -> Result<Vector2<Complex64>> {
        self.check_lambda(qn)?;
        let t = self.riccati.t_at(xi)?;
        let base = v0(qn.zeta);
        Ok(Vector2::new(cis(t) * base.x, cis(-t) * base.y))
    }

    /// The linear form entering the spinor blocks:
    ///   digamma1 = f11 x + (f12 - H) y + chi1,
    ///   digamma2 = (f12 + H) x + f22 y + chi2,
    /// which equals -p v' along the matched classical ray.
    pub fn digamma_vector(
        &self,
        qn: &QuantumNumbers,
        xi: f64,
        x: f64,
        y: f64,
    ) -> Result<Vector2<f64>> {
        self.check_lambda(qn)?;
        let f = self.riccati.f_at(xi)?;
        let chi = self.riccati.chi_at(xi, &qn.k())?;
        let h = self.riccati.profile.h.value(xi)?;
        Ok(Vector2::new(
            f[(0, 0)] * x + (f[(0, 1)] - h) * y + chi.x,
            (f[(0, 1)] + h) * x + f[(1, 1)] * y + chi.y,
        ))
    }

    /// Spinor mode in block form:
    /// Psi = N p^{-1} sqrt(Delta) e^{iS} [(m + p - s3 (sigma.digamma)) V;
    ///                                    ((m - p) s3 - (sigma.digamma)) V].
    pub fn dirac_wavefunction(
        &self,
        qn: &QuantumNumbers,
        event: &NullEvent,
    ) -> Result<SVector<Complex64, 4>> {
        self.check_lambda(qn)?;
        let xi = event.xi;
        let p = self.riccati.p_at(xi)?;
        let m = self.riccati.profile.m;
        let s = self.riccati.action_at(&qn.k(), event)?;
        let pref = normalization() / p * self.sqrt_delta(xi)? * cis(s);
        let v = self.spinor_v(qn, xi)?;
        let sf = sigma_dot(&self.digamma_vector(qn, xi, event.x, event.y)?);
        let s3 = sigma3_c();
        let ident = Matrix2::<Complex64>::identity();
        let upper = (ident * Complex64::new(m + p, 0.0) - s3 * sf) * v;
        let lower = (s3 * Complex64::new(m - p, 0.0) - sf) * v;
        Ok(SVector::<Complex64, 4>::new(
            pref * upper.x,
            pref * upper.y,
            pref * lower.x,
            pref * lower.y,
        ))
    }

    /// Grid dump of a scalar mode on a fixed (xi, eta) slice:
    /// CSV columns x, y, re, im, abs with 17 significant digits.
    pub fn wave_grid_csv(
        &self,
        qn: &QuantumNumbers,
        xi: f64,
        eta: f64,
        xs: &[f64],
        ys: &[f64],
    ) -> Result<String> {
        let mut out = String::from("x,y,re,im,abs\n");
        for &x in xs {
            for &y in ys {
                let phi = self.kg_wavefunction(qn, &NullEvent { xi, eta, x, y })?;
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    x,
                    y,
                    phi.re,
                    phi.im,
                    phi.norm()
                ));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Gaussian wave packets
// ---------------------------------------------------------------------------

/// A normalized Gaussian weight profile over (lambda, k1, k2):
/// w(u) = prod_i (pi sigma_i^2)^{-1/4} exp(-(u_i - c_i)^2 / (2 sigma_i^2)),
/// which has unit L2 norm, so a packet built from it has unit (signed)
/// norm in the continuum limit.
#[derive(Debug, Clone, Copy)]
pub struct PacketSpec {
    pub center: QuantumNumbers,
    /// Standard deviations (sigma_lambda, sigma_k1, sigma_k2).
    pub widths: [f64; 3],
}

impl PacketSpec {
    pub fn new(center: QuantumNumbers, widths: [f64; 3]) -> Result<Self> {
        if widths.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("packet widths must be positive, got {widths:?}")));
        }
        Ok(PacketSpec { center, widths })
    }

    fn weight_lambda(&self, lambda: f64) -> f64 {
        let s = self.widths[0];
        let d = lambda - self.center.lambda;
        (PI * s * s).powf(-0.25) * (-d * d / (2.0 * s * s)).exp()
    }

    fn weight_k(&self, k: &Vector2<f64>) -> f64 {
        let (s1, s2) = (self.widths[1], self.widths[2]);
        let d1 = k.x - self.center.k1;
        let d2 = k.y - self.center.k2;
        (PI * s1 * s1).powf(-0.25)
            * (PI * s2 * s2).powf(-0.25)
            * (-d1 * d1 / (2.0 * s1 * s1) - d2 * d2 / (2.0 * s2 * s2)).exp()
    }
}

/// Exact overlap integral of the two weight profiles,
/// prod_i sqrt(2 s_a s_b / (s_a^2 + s_b^2)) exp(-dc_i^2 / (2 (s_a^2 + s_b^2))).
/// Equal-width packets separated by dc in one label give
/// exp(-dc^2 / (4 sigma^2)).
pub fn gaussian_overlap(a: &PacketSpec, b: &PacketSpec) -> f64 {
    let ca = [a.center.lambda, a.center.k1, a.center.k2];
    let cb = [b.center.lambda, b.center.k1, b.center.k2];
    let mut total = 1.0;
    for i in 0..3 {
        let (sa, sb) = (a.widths[i], b.widths[i]);
        let ss = sa * sa + sb * sb;
        let dc = ca[i] - cb[i];
        total *= (2.0 * sa * sb / ss).sqrt() * (-dc * dc / (2.0 * ss)).exp();
    }
    total
}

/// Fixed-order quadrature layout for packet integrals. Node counts and
/// box sizes are chosen so that discretization ghosts (the recurrences
/// of a truncated Fourier sum) stay outside the integration boxes with
/// a wide margin; the defaults support Gram-matrix accuracy well below
/// 1e-3 and off-diagonal floors below 1e-7.
#[derive(Debug, Clone, Copy)]
pub struct PacketQuadrature {
    /// Gauss-Legendre nodes across the lambda support.
    pub n_lambda: usize,
    /// Gauss-Legendre nodes per k dimension.
    pub n_k: usize,
    /// Half-width of the lambda and k node ranges, in packet sigmas.
    pub half_sigmas: f64,
    /// Transverse panels per dimension and nodes per panel.
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Half-width of the eta box in packet eta-sigmas (sigma_eta = 2/sigma_lambda).
    pub eta_half_sigmas: f64,
    /// Half-width of the transverse box in packet decay lengths (1/sigma_k).
    pub transverse_decay_lengths: f64,
}

impl Default for PacketQuadrature {
    fn default() -> Self {
        PacketQuadrature {
            n_lambda: 32,
            n_k: 32,
            half_sigmas: 5.0,
            panels: 12,
            nodes_per_panel: 8,
            eta_half_sigmas: 6.0,
            transverse_decay_lengths: 8.0,
        }
    }
}

/// Shared mode data for a set of packets: one transport solution per
/// lambda node, all over the same xi span.
#[derive(Debug)]
pub struct PacketFamily {
    pub profile: FieldProfile,
    pub base: f64,
    pub quad: PacketQuadrature,
    pub lambdas: Vec<f64>,
    pub lambda_gl_weights: Vec<f64>,
    pub slices: Vec<RiccatiSolution>,
}

impl PacketFamily {
    /// Solves the transport system at every lambda node covering the
    /// given packets' supports (center +- half_sigmas sigma each).
    pub fn build(
        profile: &FieldProfile,
        specs: &[PacketSpec],
        xi_span: (f64, f64),
        quad: &PacketQuadrature,
        opts: &RiccatiOptions,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Invalid("packet family needs at least one packet".into()));
        }
        let lo = specs
            .iter()
            .map(|s| s.center.lambda - quad.half_sigmas * s.widths[0])
            .fold(f64::INFINITY, f64::min);
        let hi = specs
            .iter()
            .map(|s| s.center.lambda + quad.half_sigmas * s.widths[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut lambdas, mut weights) = gauss_legendre_on(quad.n_lambda, lo, hi);
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&i, &j| lambdas[i].total_cmp(&lambdas[j]));
        lambdas = order.iter().map(|&i| lambdas[i]).collect();
        weights = order.iter().map(|&i| weights[i]).collect();

        let slices: Vec<RiccatiSolution> = lambdas
            .par_iter()
            .map(|&l| RiccatiSolution::solve(profile, l, xi_span, ZSeed::default(), opts))
            .collect::<Result<_>>()?;
        Ok(PacketFamily {
            profile: profile.clone(),
            base: xi_span.0,
            quad: *quad,
            lambdas,
            lambda_gl_weights: weights,
            slices,
        })
    }

    fn mode_plane(&self, a: usize, xi: f64) -> Result<ModePlane> {
        let ric = &self.slices[a];
        let p = ric.p_at(xi)?;
        let t = ric.t_at(xi)?;
        let z = ric.z_at(xi)?;
        let (c1, c2) = ric.chi_basis_at(xi)?;
        let b = Matrix2::new(c1.x, c2.x, c1.y, c2.y);
        let (i_mat, ibar, ibar0, s0) = ric.alpha_parts_at(xi)?;
        let m = self.profile.m;
        Ok(ModePlane {
            lambda: self.lambdas[a],
            p,
            t,
            h: self.profile.h.value(xi)?,
            sqrt_delta: Complex64::new(ric.delta_at(xi)?, 0.0).sqrt(),
            p_inv_sqrt: Complex64::new(p, 0.0).sqrt().inv(),
            f: ric.f_at(xi)?,
            chibar: ric.chi_particular_at(xi)?,
            b,
            binv_t: rot(t) * z,
            i_mat,
            ibar,
            phase0: ibar0 + m * m * s0,
            f_drive: self.profile.f_vec(xi)?,
        })
    }

    fn planes(&self, xi: f64) -> Result<Vec<ModePlane>> {
        (0..self.lambdas.len())
            .into_par_iter()
            .map(|a| self.mode_plane(a, xi))
            .collect()
    }
}

/// Everything a fixed lambda-node contributes on one xi plane.
#[derive(Debug, Clone)]
struct ModePlane {
    lambda: f64,
    p: f64,
    t: f64,
    h: f64,
    sqrt_delta: Complex64,
    p_inv_sqrt: Complex64,
    f: Matrix2<f64>,
    chibar: Vector2<f64>,
    /// Basis matrix B = [chi(1) | chi(2)].
    b: Matrix2<f64>,
    /// B^{-T} = Rot(T) Z; maps k-space decay lengths to transverse ones.
    binv_t: Matrix2<f64>,
    i_mat: Matrix2<f64>,
    ibar: Vector2<f64>,
    /// Ibar0 + m^2 s0: the k-independent part of the phase quadrature.
    phase0: f64,
    f_drive: Vector2<f64>,
}

struct KNodes {
    k: Vec<Vector2<f64>>,
    w: Vec<f64>,
}

fn k_nodes(spec: &PacketSpec, quad: &PacketQuadrature) -> KNodes {
    let (k1, w1) = gauss_legendre_on(
        quad.n_k,
        spec.center.k1 - quad.half_sigmas * spec.widths[1],
        spec.center.k1 + quad.half_sigmas * spec.widths[1],
    );
    let (k2, w2) = gauss_legendre_on(
        quad.n_k,
        spec.center.k2 - quad.half_sigmas * spec.widths[2],
        spec.center.k2 + quad.half_sigmas * spec.widths[2],
    );
    let mut k = Vec::with_capacity(k1.len() * k2.len());
    let mut w = Vec::with_capacity(k.capacity());
    for (i, &a) in k1.iter().enumerate() {
        for (j, &b) in k2.iter().enumerate() {
            let kv = Vector2::new(a, b);
            k.push(kv);
            w.push(w1[i] * w2[j] * spec.weight_k(&kv));
        }
    }
    KNodes { k, w }
}

/// k-quadratic phases (1/2) k.I k + k.Ibar per node; these chirp the
/// k sum and depend on the lambda node through the phase integrals.
fn qphases(plane: &ModePlane, kn: &KNodes) -> Vec<f64> {
    kn.k
        .iter()
        .map(|k| 0.5 * (plane.i_mat * k).dot(k) + plane.ibar.dot(k))
        .collect()
}

/// The k superposition at a transverse point:
/// K(v) = sum_j w_j exp(-i [k_j . (B^T v) + qphase_j]).
fn k_sum(plane: &ModePlane, kn: &KNodes, qphase: &[f64], v: &Vector2<f64>) -> Complex64 {
    let u = plane.b.transpose() * v;
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, k) in kn.k.iter().enumerate() {
        acc += kn.w[j] * cis(-(k.dot(&u) + qphase[j]));
    }
    acc
}

/// One lambda-node's transverse profile:
/// X(v) = [p^{-1/2}] sqrt(Delta)
///        exp(-(i/2)[v.f v + 2 (chibar + F).v + phase0]) K(v).
/// The eta factor exp(-i lambda eta / 2) is handled by the caller.
fn x_value(
    plane: &ModePlane,
    kn: &KNodes,
    qphase: &[f64],
    v: &Vector2<f64>,
    with_p: bool,
) -> Complex64 {
    let quad_phase =
        -0.5 * ((plane.f * v).dot(v) + 2.0 * (plane.chibar + plane.f_drive).dot(v) + plane.phase0);
    let mut pref = plane.sqrt_delta * cis(quad_phase);
    if with_p {
        pref *= plane.p_inv_sqrt;
    }
    pref * k_sum(plane, kn, qphase, v)
}

/// Integration box on a null plane: an eta interval times a transverse
/// rectangle.
#[derive(Debug, Clone, Copy)]
pub struct NullPlaneBox {
    pub eta_center: f64,
    pub eta_half: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

/// Sizes a box to hold the given packets on the plane xi: the eta
/// interval covers `eta_half_sigmas` packet sigmas around the
/// stationary-phase center, and the transverse rectangle is the union
/// of the k-space decay boxes mapped through B^{-T}, centered on each
/// packet's classical ray.
pub fn auto_box(
    family: &PacketFamily,
    xi: f64,
    specs: &[PacketSpec],
    quad: &PacketQuadrature,
) -> Result<NullPlaneBox> {
    if specs.is_empty() {
        return Err(Error::Invalid("auto_box needs at least one packet".into()));
    }
    let planes = family.planes(xi)?;
    let n = planes.len();

    // eta center: stationary phase eta_c = -d alpha / d lambda at the
    // packet center, estimated from the two nearest lambda nodes.
    let mut eta_center = 0.0;
    for spec in specs {
        let c = spec.center.lambda;
        let hi = family
            .lambdas
            .iter()
            .position(|&l| l >= c)
            .unwrap_or(n - 1)
            .max(1);
        let lo = hi - 1;
        let kc = spec.center.k();
        let alpha = |pl: &ModePlane| (pl.i_mat * kc).dot(&kc) + 2.0 * pl.ibar.dot(&kc) + pl.phase0;
        let slope = (alpha(&planes[hi]) - alpha(&planes[lo]))
            / (family.lambdas[hi] - family.lambdas[lo]);
        eta_center -= slope / specs.len() as f64;
    }
    let sigma_eta_max = specs.iter().map(|s| 2.0 / s.widths[0]).fold(0.0, f64::max);
    let eta_half = quad.eta_half_sigmas * sigma_eta_max;

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for spec in specs {
        let u1 = quad.transverse_decay_lengths / spec.widths[1];
        let u2 = quad.transverse_decay_lengths / spec.widths[2];
        let kc = spec.center.k();
        for pl in &planes {
            let m = pl.binv_t;
            let vc = -(m * (pl.i_mat * kc + pl.ibar));
            let ext_x = m[(0, 0)].abs() * u1 + m[(0, 1)].abs() * u2;
            let ext_y = m[(1, 0)].abs() * u1 + m[(1, 1)].abs() * u2;
            x_lo = x_lo.min(vc.x - ext_x);
            x_hi = x_hi.max(vc.x + ext_x);
            y_lo = y_lo.min(vc.y - ext_y);
            y_hi = y_hi.max(vc.y + ext_y);
        }
    }
    Ok(NullPlaneBox { eta_center, eta_half, x_range: (x_lo, x_hi), y_range: (y_lo, y_hi) })
}

/// Closed-form eta integral of a mode pair over the box:
/// int exp(i u eta) d eta with u = (lambda_a - lambda_b)/2.
fn eta_kernel(u: f64, bx: &NullPlaneBox) -> Complex64 {
    let w = bx.eta_half;
    let amp = if (u * w).abs() < 1e-9 { 2.0 * w } else { 2.0 * (u * w).sin() / u };
    cis(u * bx.eta_center) * amp
}

struct SpatialGrid {
    pts: Vec<Vector2<f64>>,
    wts: Vec<f64>,
}

fn spatial_grid(bx: &NullPlaneBox, quad: &PacketQuadrature) -> SpatialGrid {
    let (xs, wxs) =
        composite_gauss_legendre(bx.x_range.0, bx.x_range.1, quad.panels, quad.nodes_per_panel);
    let (ys, wys) =
        composite_gauss_legendre(bx.y_range.0, bx.y_range.1, quad.panels, quad.nodes_per_panel);
    let mut pts = Vec::with_capacity(xs.len() * ys.len());
    let mut wts = Vec::with_capacity(pts.capacity());
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            pts.push(Vector2::new(x, y));
            wts.push(wxs[i] * wys[j]);
        }
    }
    SpatialGrid { pts, wts }
}

/// Per-packet data on one plane: the lambda-node coefficients, the
/// grid slices (with square-rooted grid weights folded in), and the
/// rotated spin vectors.
struct SpecData {
    coefs: Vec<f64>,
    slices: Vec<Vec<Complex64>>,
    vspin: Vec<Vector2<Complex64>>,
}

fn build_spec_data(
    family: &PacketFamily,
    planes: &[ModePlane],
    spec: &PacketSpec,
    grid: &SpatialGrid,
    quad: &PacketQuadrature,
    with_p: bool,
) -> SpecData {
    let kn = k_nodes(spec, quad);
    let sqrt_wts: Vec<f64> = grid.wts.iter().map(|w| w.sqrt()).collect();
    let slices: Vec<Vec<Complex64>> = planes
        .par_iter()
        .map(|pl| {
            let qp = qphases(pl, &kn);
            grid.pts
                .iter()
                .zip(&sqrt_wts)
                .map(|(v, sw)| x_value(pl, &kn, &qp, v, with_p) * *sw)
                .collect()
        })
        .collect();
    let coefs = (0..planes.len())
        .map(|a| family.lambda_gl_weights[a] * spec.weight_lambda(planes[a].lambda) * normalization())
        .collect();
    let vspin = planes
        .iter()
        .map(|pl| {
            let base = v0(spec.center.zeta);
            Vector2::new(cis(pl.t) * base.x, cis(-pl.t) * base.y)
        })
        .collect();
    SpecData { coefs, slices, vspin }
}

fn gram_impl(
    family: &PacketFamily,
    xi: f64,
    specs: &[PacketSpec],
    bx: &NullPlaneBox,
    quad: &PacketQuadrature,
    spinor: bool,
) -> Result<Vec<Vec<Complex64>>> {
    let planes = family.planes(xi)?;
    let grid = spatial_grid(bx, quad);
    let data: Vec<SpecData> = specs
        .iter()
        .map(|s| build_spec_data(family, &planes, s, &grid, quad, !spinor))
        .collect();

    let n = planes.len();
    let m = specs.len();
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); m]; m];
    for i in 0..m {
        for j in i..m {
            let total: Complex64 = (0..n)
                .into_par_iter()
                .map(|a| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b in 0..n {
                        let dot: Complex64 = data[i].slices[a]
                            .iter()
                            .zip(&data[j].slices[b])
                            .map(|(xa, xb)| xa.conj() * xb)
                            .sum();
                        let kernel =
                            eta_kernel(0.5 * (planes[a].lambda - planes[b].lambda), bx);
                        let factor = if spinor {
                            2.0 * data[i].vspin[a].dotc(&data[j].vspin[b])
                        } else {
                            Complex64::new(planes[a].p + planes[b].p, 0.0)
                        };
                        acc += data[i].coefs[a] * data[j].coefs[b] * kernel * factor * dot;
                    }
                    acc
                })
                .sum();
            gram[i][j] = total;
            gram[j][i] = total.conj();
        }
    }
    Ok(gram)
}

/// Packet Gram matrix under the scalar inner product
/// (Phi1, Phi2) = int [(Q Phi1)* Phi2 + Phi1* (Q Phi2)] d eta dx dy,
/// with Q applied in closed form (Q Phi = p Phi per mode). Self entries
/// approach sign(p) and off-diagonal entries the Gaussian label
/// overlaps. Spin labels are ignored.
pub fn scalar_gram(
    family: &PacketFamily,
    xi: f64,
    specs: &[PacketSpec],
    bx: &NullPlaneBox,
    quad: &PacketQuadrature,
) -> Result<Vec<Vec<Complex64>>> {
    gram_impl(family, xi, specs, bx, quad, false)
}

/// Packet Gram matrix under the spinor inner product
/// <Psi1, Psi2> = int (P- Psi1)^dagger (P- Psi2) d eta dx dy.
/// The projected modes are N sqrt(Delta) e^{iS} (V; -s3 V), so entries
/// carry the numeric spin factor 2 V_a^dagger V_b; packets of opposite
/// zeta are orthogonal.
pub fn spinor_gram(
    family: &PacketFamily,
    xi: f64,
    specs: &[PacketSpec],
    bx: &NullPlaneBox,
    quad: &PacketQuadrature,
) -> Result<Vec<Vec<Complex64>>> {
    gram_impl(family, xi, specs, bx, quad, true)
}

/// Scalar inner product of two packets over the box.
pub fn inner_product_scalar(
    family: &PacketFamily,
    xi: f64,
    a: &PacketSpec,
    b: &PacketSpec,
    bx: &NullPlaneBox,
    quad: &PacketQuadrature,
) -> Result<Complex64> {
    Ok(scalar_gram(family, xi, &[*a, *b], bx, quad)?[0][1])
}

/// Spinor inner product of two packets over the box.
pub fn inner_product_spinor(
    family: &PacketFamily,
    xi: f64,
    a: &PacketSpec,
    b: &PacketSpec,
    bx: &NullPlaneBox,
    quad: &PacketQuadrature,
) -> Result<Complex64> {
    Ok(spinor_gram(family, xi, &[*a, *b], bx, quad)?[0][1])
}

/// Pointwise scalar packet amplitude
/// psi(eta, x, y) = int w(lambda, k) Phi_{lambda,k} d lambda d^2 k
/// by the family's fixed-order quadrature.
pub fn packet_scalar(
    family: &PacketFamily,
    spec: &PacketSpec,
    event: &NullEvent,
) -> Result<Complex64> {
    let kn = k_nodes(spec, &family.quad);
    let v = Vector2::new(event.x, event.y);
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..family.lambdas.len() {
        let pl = family.mode_plane(a, event.xi)?;
        let qp = qphases(&pl, &kn);
        let coef =
            family.lambda_gl_weights[a] * spec.weight_lambda(pl.lambda) * normalization();
        acc += coef * cis(-0.5 * pl.lambda * event.eta) * x_value(&pl, &kn, &qp, &v, true);
    }
    Ok(acc)
}

/// Pointwise spinor packet amplitude (4 components).
pub fn packet_dirac(
    family: &PacketFamily,
    spec: &PacketSpec,
    event: &NullEvent,
) -> Result<SVector<Complex64, 4>> {
    let kn = k_nodes(spec, &family.quad);
    let v = Vector2::new(event.x, event.y);
    let m = family.profile.m;
    let mut acc = SVector::<Complex64, 4>::zeros();
    for a in 0..family.lambdas.len() {
        let pl = family.mode_plane(a, event.xi)?;
        let qp = qphases(&pl, &kn);
        let coef =
            family.lambda_gl_weights[a] * spec.weight_lambda(pl.lambda) * normalization();
        let base = v0(spec.center.zeta);
        let vs = Vector2::new(cis(pl.t) * base.x, cis(-pl.t) * base.y);
        let quad_phase = -0.5
            * ((pl.f * v).dot(&v) + 2.0 * (pl.chibar + pl.f_drive).dot(&v) + pl.phase0);
        let u = pl.b.transpose() * v;
        let s3 = sigma3_c();
        let ident = Matrix2::<Complex64>::identity();
        for (j, k) in kn.k.iter().enumerate() {
            let chi = pl.b * k + pl.chibar;
            let dig = Vector2::new(
                pl.f[(0, 0)] * v.x + (pl.f[(0, 1)] - pl.h) * v.y + chi.x,
                (pl.f[(0, 1)] + pl.h) * v.x + pl.f[(1, 1)] * v.y + chi.y,
            );
            let sf = sigma_dot(&dig);
            let upper = (ident * Complex64::new(m + pl.p, 0.0) - s3 * sf) * vs;
            let lower = (s3 * Complex64::new(m - pl.p, 0.0) - sf) * vs;
            let phase = -0.5 * pl.lambda * event.eta + quad_phase - (k.dot(&u) + qp[j]);
            let pref = coef * kn.w[j] / pl.p * pl.sqrt_delta * cis(phase);
            acc += SVector::<Complex64, 4>::new(
                pref * upper.x,
                pref * upper.y,
                pref * lower.x,
                pref * lower.y,
            );
        }
    }
    Ok(acc)
}

/// Gram matrix export: JSON object with real and imaginary parts as
/// nested arrays, 17 significant digits.
pub fn gram_to_json(gram: &[Vec<Complex64>]) -> String {
    let render = |f: &dyn Fn(&Complex64) -> f64| {
        let rows: Vec<String> = gram
            .iter()
            .map(|row| {
                let cells: Vec<String> = row.iter().map(|c| format!("{:.16e}", f(c))).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        rows.join(",\n    ")
    };
    format!(
        "{{\n  \"re\": [\n    {}\n  ],\n  \"im\": [\n    {}\n  ]\n}}\n",
        render(&|c| c.re),
        render(&|c| c.im)
    )
}
