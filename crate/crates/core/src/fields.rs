//! Field-class profiles on null planes.
//!
//! The electromagnetic field class handled by this library is parameterized
//! by seven functions of the light-cone coordinate xi alone: the
//! longitudinal potential g, half the longitudinal magnetic field H, the
//! transverse drive pair (F1, F2), and the symmetric transverse curvature
//! matrix (r11, r12, r22). All quantities are scaled: the coupling e/(c
//! hbar) is absorbed into the stored amplitudes at configuration time, the
//! action is in units of hbar, and the mass is m0 c / hbar.
//!
//! The transverse electric field and the transverse magnetic field are
//! locked to each other (E_x = H_y, E_y = -H_x); the evaluation routines
//! produce fields with that structure by construction, and the potentials
//! reproduce them under differentiation (see the property tests).

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One oscillatory term: cos_amp * cos(omega xi) + sin_amp * sin(omega xi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierTerm {
    pub omega: f64,
    pub cos_amp: f64,
    pub sin_amp: f64,
}

/// One monomial term: coeff * xi^power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyTerm {
    pub coeff: f64,
    pub power: u32,
}

/// Natural cubic spline through strictly increasing knots. Queries outside
/// the knot range are errors: tables never extrapolate.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots (natural boundary: zero at the ends).
    m: Vec<f64>,
}

impl CubicTable {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Invalid("table needs at least two knots".into()));
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("table knots must be finite".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("table knots must be strictly increasing".into()));
        }
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal solve for the interior second derivatives.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 2..n - 1 {
                let lower = xs[i] - xs[i - 1];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Ok(CubicTable { xs, ys, m })
    }

    fn segment(&self, xi: f64) -> Result<usize> {
        let (min, max) = (self.xs[0], *self.xs.last().unwrap());
        if xi < min || xi > max {
            return Err(Error::TableDomain { xi, min, max });
        }
        let idx = self.xs.partition_point(|&x| x <= xi);
        Ok(idx.clamp(1, self.xs.len() - 1) - 1)
    }

    pub fn value(&self, xi: f64) -> Result<f64> {
        let i = self.segment(xi)?;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - xi) / h;
        let b = (xi - self.xs[i]) / h;
        Ok(a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0)
    }

    pub fn derivative(&self, xi: f64) -> Result<f64> {
        let i = self.segment(xi)?;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - xi) / h;
        let b = (xi - self.xs[i]) / h;
        Ok((self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0)
    }

    pub fn second_derivative(&self, xi: f64) -> Result<f64> {
        let i = self.segment(xi)?;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - xi) / h;
        let b = (xi - self.xs[i]) / h;
        Ok(a * self.m[i] + b * self.m[i + 1])
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }
}

/// A scalar function of xi: constant + Fourier terms + polynomial terms +
/// an optional tabulated part. Derivatives of the parametric parts are
/// exact; the tabulated part differentiates its spline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct XiFunction {
    pub constant: f64,
    pub fourier: Vec<FourierTerm>,
    pub polynomial: Vec<PolyTerm>,
    pub table: Option<CubicTable>,
}

impl XiFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        XiFunction { constant: c, ..Self::default() }
    }

    /// amplitude * cos(omega xi)
    pub fn cosine(amplitude: f64, omega: f64) -> Self {
        XiFunction::zero().plus_cos(amplitude, omega)
    }

    /// amplitude * sin(omega xi)
    pub fn sine(amplitude: f64, omega: f64) -> Self {
        XiFunction::zero().plus_sin(amplitude, omega)
    }

    pub fn plus_cos(mut self, amplitude: f64, omega: f64) -> Self {
        self.fourier.push(FourierTerm { omega, cos_amp: amplitude, sin_amp: 0.0 });
        self
    }

    pub fn plus_sin(mut self, amplitude: f64, omega: f64) -> Self {
        self.fourier.push(FourierTerm { omega, cos_amp: 0.0, sin_amp: amplitude });
        self
    }

    pub fn plus_poly(mut self, coeff: f64, power: u32) -> Self {
        self.polynomial.push(PolyTerm { coeff, power });
        self
    }

    pub fn with_table(mut self, table: CubicTable) -> Self {
        self.table = Some(table);
        self
    }

    pub fn value(&self, xi: f64) -> Result<f64> {
        let mut v = self.constant;
        for t in &self.fourier {
            let (s, c) = (t.omega * xi).sin_cos();
            v += t.cos_amp * c + t.sin_amp * s;
        }
        for t in &self.polynomial {
            v += t.coeff * xi.powi(t.power as i32);
        }
        if let Some(tab) = &self.table {
            v += tab.value(xi)?;
        }
        Ok(v)
    }

    pub fn derivative(&self, xi: f64) -> Result<f64> {
        let mut v = 0.0;
        for t in &self.fourier {
            let (s, c) = (t.omega * xi).sin_cos();
            v += t.omega * (t.sin_amp * c - t.cos_amp * s);
        }
        for t in &self.polynomial {
            if t.power > 0 {
                v += t.coeff * t.power as f64 * xi.powi(t.power as i32 - 1);
            }
        }
        if let Some(tab) = &self.table {
            v += tab.derivative(xi)?;
        }
        Ok(v)
    }

    pub fn second_derivative(&self, xi: f64) -> Result<f64> {
        let mut v = 0.0;
        for t in &self.fourier {
            let (s, c) = (t.omega * xi).sin_cos();
            v -= t.omega * t.omega * (t.cos_amp * c + t.sin_amp * s);
        }
        for t in &self.polynomial {
            if t.power > 1 {
                let p = t.power as f64;
                v += t.coeff * p * (p - 1.0) * xi.powi(t.power as i32 - 2);
            }
        }
        if let Some(tab) = &self.table {
            v += tab.second_derivative(xi)?;
        }
        Ok(v)
    }

    /// Structurally constant: no Fourier, polynomial, or tabulated part.
    /// (A degree-zero monomial still counts as varying for this check only
    /// if its coefficient is nonzero.)
    pub fn is_constant(&self) -> bool {
        self.fourier.iter().all(|t| t.cos_amp == 0.0 && t.sin_amp == 0.0)
            && self.polynomial.iter().all(|t| t.coeff == 0.0 || t.power == 0)
            && self.table.is_none()
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant()
            && self.constant + self.polynomial.iter().filter(|t| t.power == 0).map(|t| t.coeff).sum::<f64>() == 0.0
    }

    /// Fastest oscillation frequency carried by the parametric part
    /// (0 when no active Fourier term): basis for quadrature pre-splits.
    pub fn max_omega(&self) -> f64 {
        self.fourier
            .iter()
            .filter(|t| t.cos_amp != 0.0 || t.sin_amp != 0.0)
            .map(|t| t.omega.abs())
            .fold(0.0, f64::max)
    }
}

/// Electromagnetic field vectors at one event. The transverse components
/// are locked: e.y() == -h.x() and e.x() == h.y().
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EMField {
    pub e: Vector3<f64>,
    pub h: Vector3<f64>,
}

impl EMField {
    /// Builds the crossed-structure field from the free components.
    pub fn crossed(e_x: f64, e_y: f64, e_z: f64, h_z: f64) -> Self {
        EMField {
            e: Vector3::new(e_x, e_y, e_z),
            h: Vector3::new(-e_y, e_x, h_z),
        }
    }
}

/// The full profile: seven functions of xi plus the scaled rest mass.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    pub g: XiFunction,
    pub h: XiFunction,
    pub f1: XiFunction,
    pub f2: XiFunction,
    pub r11: XiFunction,
    pub r12: XiFunction,
    pub r22: XiFunction,
    pub m: f64,
}

impl FieldProfile {
    pub fn new(
        g: XiFunction,
        h: XiFunction,
        f1: XiFunction,
        f2: XiFunction,
        r11: XiFunction,
        r12: XiFunction,
        r22: XiFunction,
        m: f64,
    ) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Invalid(format!("mass must be positive and finite, got {m}")));
        }
        Ok(FieldProfile { g, h, f1, f2, r11, r12, r22, m })
    }

    /// Everything zero except the mass; free motion.
    pub fn free(m: f64) -> Result<Self> {
        Self::new(
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            m,
        )
    }

    /// Rotating quadrupole ("vortex") profile: the curvature matrix rotates
    /// at angular rate omega with amplitude c_amp and zero trace,
    ///   r11 = c_amp cos(omega xi), r12 = c_amp sin(omega xi), r22 = -r11,
    /// with g = H = F = 0.
    pub fn vortex(c_amp: f64, omega: f64, m: f64) -> Result<Self> {
        Self::new(
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::cosine(c_amp, omega),
            XiFunction::sine(c_amp, omega),
            XiFunction::cosine(-c_amp, omega),
            m,
        )
    }

    /// Periodic quadrupole riding on a constant longitudinal magnetic
    /// field 2h:
    ///   r11 = c1 + c2 cos(omega xi), r12 = c2 sin(omega xi),
    ///   r22 = c1 - c2 cos(omega xi), H = h, g = F = 0.
    pub fn periodic_with_h(c1: f64, c2: f64, omega: f64, h: f64, m: f64) -> Result<Self> {
        Self::new(
            XiFunction::zero(),
            XiFunction::constant(h),
            XiFunction::zero(),
            XiFunction::zero(),
            XiFunction::constant(c1).plus_cos(c2, omega),
            XiFunction::sine(c2, omega),
            XiFunction::constant(c1).plus_cos(-c2, omega),
            m,
        )
    }

    /// Scaled quadratic form A(xi, x, y) = r11 x^2 + 2 r12 x y + r22 y^2.
    pub fn quadratic_form(&self, xi: f64, x: f64, y: f64) -> Result<f64> {
        Ok(self.r11.value(xi)? * x * x
            + 2.0 * self.r12.value(xi)? * x * y
            + self.r22.value(xi)? * y * y)
    }

    /// Scaled 4-potential (A0, A1, A2, A3) at an event.
    pub fn eval_potentials(&self, xi: f64, x: f64, y: f64) -> Result<[f64; 4]> {
        let g = self.g.value(xi)?;
        let a = self.quadratic_form(xi, x, y)?;
        let h = self.h.value(xi)?;
        Ok([
            0.5 * (g - a),
            -self.f1.value(xi)? - h * y,
            -self.f2.value(xi)? + h * x,
            -0.5 * (g + a),
        ])
    }

    /// Field vectors at an event. The transverse electric components are
    ///   E_x = F1' + r11 x + (r12 + H') y,
    ///   E_y = F2' + (r12 - H') x + r22 y,
    /// the longitudinal ones E_z = g' and H_z = 2H, and the transverse
    /// magnetic field is locked to E by the crossed structure.
    pub fn eval_fields(&self, xi: f64, x: f64, y: f64) -> Result<EMField> {
        let r11 = self.r11.value(xi)?;
        let r12 = self.r12.value(xi)?;
        let r22 = self.r22.value(xi)?;
        let hp = self.h.derivative(xi)?;
        let e_x = self.f1.derivative(xi)? + r11 * x + (r12 + hp) * y;
        let e_y = self.f2.derivative(xi)? + (r12 - hp) * x + r22 * y;
        Ok(EMField::crossed(e_x, e_y, self.g.derivative(xi)?, 2.0 * self.h.value(xi)?))
    }

    /// Scaled charge density of the source supporting this profile,
    /// rho = r11 + r22 - g''. Vacuum profiles have rho = 0.
    pub fn maxwell_current(&self, xi: f64) -> Result<f64> {
        Ok(self.r11.value(xi)? + self.r22.value(xi)? - self.g.second_derivative(xi)?)
    }

    /// Longitudinal momentum function p(xi) = lambda - g(xi).
    pub fn p(&self, lambda: f64, xi: f64) -> Result<f64> {
        Ok(lambda - self.g.value(xi)?)
    }

    /// d p / d xi = -g'(xi).
    pub fn p_prime(&self, xi: f64) -> Result<f64> {
        Ok(-self.g.derivative(xi)?)
    }

    /// Symmetric curvature matrix r(xi).
    pub fn r_matrix(&self, xi: f64) -> Result<Matrix2<f64>> {
        let r11 = self.r11.value(xi)?;
        let r12 = self.r12.value(xi)?;
        let r22 = self.r22.value(xi)?;
        Ok(Matrix2::new(r11, r12, r12, r22))
    }

    /// Transverse drive values (F1, F2).
    pub fn f_vec(&self, xi: f64) -> Result<Vector2<f64>> {
        Ok(Vector2::new(self.f1.value(xi)?, self.f2.value(xi)?))
    }

    /// Transverse drive derivatives (F1', F2').
    pub fn f_prime_vec(&self, xi: f64) -> Result<Vector2<f64>> {
        Ok(Vector2::new(self.f1.derivative(xi)?, self.f2.derivative(xi)?))
    }

    /// Fastest oscillation frequency across all seven profile functions.
    pub fn max_omega(&self) -> f64 {
        [&self.g, &self.h, &self.f1, &self.f2, &self.r11, &self.r12, &self.r22]
            .iter()
            .map(|f| f.max_omega())
            .fold(0.0, f64::max)
    }
}

pub mod config {
    //! JSON-facing profile specification.
    //!
    //! A profile is either a named preset or an explicit set of functions:
    //!
    //! ```json
    //! {"preset": {"name": "vortex", "c_amp": 0.05, "omega": 0.5}, "m": 1.0}
    //! {"explicit": {"g": {"constant": 0.1},
    //!               "r11": {"fourier": [{"omega": 1.0, "cos_amp": 0.2}]}},
    //!  "m": 1.0}
    //! ```
    //!
    //! Omitted functions are zero. Amplitudes are given in scaled units
    //! (coupling already absorbed).

    use serde::{Deserialize, Serialize};

    use super::{CubicTable, FieldProfile, FourierTerm, PolyTerm, XiFunction};
    use crate::error::{Error, Result};

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    pub struct FourierTermSpec {
        pub omega: f64,
        #[serde(default)]
        pub cos_amp: f64,
        #[serde(default)]
        pub sin_amp: f64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    pub struct PolyTermSpec {
        pub coeff: f64,
        pub power: u32,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
    #[serde(deny_unknown_fields)]
    pub struct XiFunctionSpec {
        #[serde(default)]
        pub constant: f64,
        #[serde(default)]
        pub fourier: Vec<FourierTermSpec>,
        #[serde(default)]
        pub polynomial: Vec<PolyTermSpec>,
        /// Knots (xi, value) of a natural cubic spline; never extrapolated.
        #[serde(default)]
        pub table: Option<Vec<[f64; 2]>>,
    }

    impl XiFunctionSpec {
        pub fn build(&self) -> Result<XiFunction> {
            let table = match &self.table {
                Some(knots) => {
                    let pairs: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
                    Some(CubicTable::new(&pairs)?)
                }
                None => None,
            };
            Ok(XiFunction {
                constant: self.constant,
                fourier: self
                    .fourier
                    .iter()
                    .map(|t| FourierTerm { omega: t.omega, cos_amp: t.cos_amp, sin_amp: t.sin_amp })
                    .collect(),
                polynomial: self.polynomial.iter().map(|t| PolyTerm { coeff: t.coeff, power: t.power }).collect(),
                table,
            })
        }
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    #[serde(tag = "name")]
    pub enum PresetSpec {
        #[serde(rename = "vortex")]
        Vortex { c_amp: f64, omega: f64 },
        #[serde(rename = "periodic_with_H")]
        PeriodicWithH { c1: f64, c2: f64, omega: f64, h: f64 },
    }

    #[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
    #[serde(deny_unknown_fields)]
    pub struct ExplicitProfileSpec {
        #[serde(default)]
        pub g: XiFunctionSpec,
        #[serde(default)]
        pub h: XiFunctionSpec,
        #[serde(default)]
        pub f1: XiFunctionSpec,
        #[serde(default)]
        pub f2: XiFunctionSpec,
        #[serde(default)]
        pub r11: XiFunctionSpec,
        #[serde(default)]
        pub r12: XiFunctionSpec,
        #[serde(default)]
        pub r22: XiFunctionSpec,
    }

    #[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    pub struct ProfileSpec {
        #[serde(default)]
        pub preset: Option<PresetSpec>,
        #[serde(default)]
        pub explicit: Option<ExplicitProfileSpec>,
        #[serde(default = "default_mass")]
        pub m: f64,
    }

    fn default_mass() -> f64 {
        1.0
    }

    impl ProfileSpec {
        pub fn build(&self) -> Result<FieldProfile> {
            match (&self.preset, &self.explicit) {
                (Some(_), Some(_)) => {
                    Err(Error::Config("profile: give either preset or explicit, not both".into()))
                }
                (Some(PresetSpec::Vortex { c_amp, omega }), None) => {
                    FieldProfile::vortex(*c_amp, *omega, self.m)
                }
                (Some(PresetSpec::PeriodicWithH { c1, c2, omega, h }), None) => {
                    FieldProfile::periodic_with_h(*c1, *c2, *omega, *h, self.m)
                }
                (None, Some(ex)) => FieldProfile::new(
                    ex.g.build()?,
                    ex.h.build()?,
                    ex.f1.build()?,
                    ex.f2.build()?,
                    ex.r11.build()?,
                    ex.r12.build()?,
                    ex.r22.build()?,
                    self.m,
                ),
                (None, None) => Err(Error::Config("profile: preset or explicit required".into())),
            }
        }
    }

    pub fn profile_from_json(json: &str) -> Result<FieldProfile> {
        let spec: ProfileSpec = serde_json::from_str(json)?;
        spec.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vortex_potentials_at_origin_quadrant() {
        // c_amp = 1, omega = 1, xi = 0, (x, y) = (1, 0):
        // quadratic form = r11 = 1, so A0 = -1/2 and A3 = -1/2.
        let p = FieldProfile::vortex(1.0, 1.0, 1.0).unwrap();
        let a = p.eval_potentials(0.0, 1.0, 0.0).unwrap();
        assert_eq!(a[0], -0.5);
        assert_eq!(a[1], 0.0);
        assert_eq!(a[2], 0.0);
        assert_eq!(a[3], -0.5);
    }

    #[test]
    fn vortex_is_sourceless() {
        let p = FieldProfile::vortex(0.7, 1.3, 1.0).unwrap();
        for i in 0..10 {
            let xi = -2.0 + 0.43 * i as f64;
            assert_eq!(p.maxwell_current(xi).unwrap(), 0.0);
        }
    }

    #[test]
    fn periodic_preset_density_is_twice_c1() {
        let p = FieldProfile::periodic_with_h(-0.3, 0.2, 0.9, 0.25, 1.0).unwrap();
        for i in 0..10 {
            let xi = -1.0 + 0.3 * i as f64;
            let rho = p.maxwell_current(xi).unwrap();
            assert!((rho - (-0.6)).abs() < 1e-15);
        }
    }

    #[test]
    fn crossed_structure_is_locked() {
        let p = FieldProfile::periodic_with_h(-0.3, 0.2, 0.9, 0.25, 1.0).unwrap();
        let f = p.eval_fields(0.37, 0.5, -1.2).unwrap();
        assert_eq!(f.e.x, f.h.y);
        assert_eq!(f.e.y, -f.h.x);
        assert_eq!(f.h.z, 0.5);
    }

    #[test]
    fn table_refuses_extrapolation() {
        let tab = CubicTable::new(&[(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)]).unwrap();
        let f = XiFunction::zero().with_table(tab);
        assert!(f.value(1.5).is_ok());
        match f.value(2.5) {
            Err(Error::TableDomain { xi, min, max }) => {
                assert_eq!(xi, 2.5);
                assert_eq!(min, 0.0);
                assert_eq!(max, 2.0);
            }
            other => panic!("expected TableDomain, got {other:?}"),
        }
    }

    #[test]
    fn spline_reproduces_knots_and_is_c2() {
        let knots: Vec<(f64, f64)> = (0..9).map(|i| {
            let x = i as f64 * 0.5;
            (x, (1.3 * x).sin() + 0.2 * x)
        }).collect();
        let tab = CubicTable::new(&knots).unwrap();
        for (x, y) in &knots {
            assert!((tab.value(*x).unwrap() - y).abs() < 1e-14);
        }
        // Continuity of value/derivative/second derivative across a knot.
        let eps = 1e-9;
        for &(x, _) in &knots[1..knots.len() - 1] {
            let dl = tab.derivative(x - eps).unwrap();
            let dr = tab.derivative(x + eps).unwrap();
            assert!((dl - dr).abs() < 1e-6);
            let sl = tab.second_derivative(x - eps).unwrap();
            let sr = tab.second_derivative(x + eps).unwrap();
            assert!((sl - sr).abs() < 1e-6);
        }
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"preset": {"name": "periodic_with_H",
                        "c1": -0.3, "c2": 0.2, "omega": 0.9, "h": 0.25},
                       "m": 1.5}"#;
        let p = config::profile_from_json(json).unwrap();
        assert_eq!(p.m, 1.5);
        assert_eq!(p.h.value(3.0).unwrap(), 0.25);
        let built = FieldProfile::periodic_with_h(-0.3, 0.2, 0.9, 0.25, 1.5).unwrap();
        assert_eq!(p, built);
    }

    #[test]
    fn config_rejects_mass_zero() {
        let json = r#"{"preset": {"name": "vortex", "c_amp": 0.1, "omega": 1.0}, "m": 0.0}"#;
        assert!(config::profile_from_json(json).is_err());
    }
}
