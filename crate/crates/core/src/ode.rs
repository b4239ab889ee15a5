//! Embedded Runge-Kutta 5(4) integration with dense output.
//!
//! Dormand-Prince pair, adaptive step control on a mixed absolute/relative
//! RMS error norm, and the standard quartic interpolant on every accepted
//! step so solutions can be queried anywhere in the integrated span.
//! Right-hand sides are fallible: a stage evaluation may refuse a state
//! (turning point, table domain, caustic threshold), in which case the
//! step is retried smaller until the refusal is genuine.

use nalgebra::SVector;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dense-output weights for the interpolant's fifth coefficient.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Disables error control and takes constant steps (order
    /// measurements and other diagnostics).
    pub fixed_step: Option<f64>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_max: None,
            max_steps: 1_000_000,
            fixed_step: None,
        }
    }
}

/// One accepted step's interpolant: y(x0 + t*h) for t in [0, 1] is
/// c1 + t*(c2 + (1-t)*(c3 + t*(c4 + (1-t)*c5))).
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub x0: f64,
    pub h: f64,
    cont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn eval(&self, x: f64) -> SVector<f64, N> {
        let t = (x - self.x0) / self.h;
        let t1 = 1.0 - t;
        self.cont[0]
            + (self.cont[1] + (self.cont[2] + (self.cont[3] + self.cont[4] * t1) * t) * t1) * t
    }
}

/// View of an accepted step handed to the observer.
pub struct StepView<'a, const N: usize> {
    pub x0: f64,
    pub x1: f64,
    pub y0: &'a SVector<f64, N>,
    pub y1: &'a SVector<f64, N>,
    pub f1: &'a SVector<f64, N>,
    pub dense: &'a DenseStep<N>,
}

/// Observer outcome for an accepted step.
pub enum StepControl {
    Continue,
    /// Finish successfully with the solution integrated so far.
    Stop,
}

#[derive(Debug, Clone)]
pub struct OdeSolution<const N: usize> {
    pub xs: Vec<f64>,
    pub ys: Vec<SVector<f64, N>>,
    /// Right-hand side at each accepted node.
    pub derivs: Vec<SVector<f64, N>>,
    pub dense: Vec<DenseStep<N>>,
    pub n_accepted: usize,
    pub n_rejected: usize,
    pub n_eval: usize,
    /// True when an observer stopped the run before reaching the end.
    pub stopped_early: bool,
}

impl<const N: usize> OdeSolution<N> {
    pub fn start(&self) -> f64 {
        self.xs[0]
    }

    pub fn end(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Interpolated state anywhere in the integrated span (1e-9-widths of
    /// roundoff slack at the ends are tolerated and clamped).
    pub fn eval(&self, x: f64) -> Result<SVector<f64, N>> {
        if self.dense.is_empty() {
            if x == self.xs[0] {
                return Ok(self.ys[0]);
            }
            return Err(Error::Invalid(format!("empty solution queried at {x}")));
        }
        let dir = self.dense[0].h.signum();
        let (lo, hi) = (self.start(), self.end());
        let slack = 1e-9 * (hi - lo).abs().max(1.0);
        if (x - lo) * dir < -slack || (x - hi) * dir > slack {
            return Err(Error::Invalid(format!(
                "query at {x} outside integrated span [{lo}, {hi}]"
            )));
        }
        let x = if (x - lo) * dir < 0.0 {
            lo
        } else if (x - hi) * dir > 0.0 {
            hi
        } else {
            x
        };
        // Binary search for the step containing x.
        let mut a = 0usize;
        let mut b = self.dense.len();
        while b - a > 1 {
            let mid = (a + b) / 2;
            if (x - self.dense[mid].x0) * dir >= 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(self.dense[a].eval(x))
    }
}

fn error_norm<const N: usize>(
    err: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    atol: f64,
    rtol: f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

/// Integrates y' = f(x, y) from span.0 to span.1 (either direction).
/// The observer runs after every accepted step and may stop the run or
/// fail it with a domain-specific error.
pub fn solve<const N: usize, F, O>(
    mut f: F,
    span: (f64, f64),
    y0: SVector<f64, N>,
    opts: &Options,
    mut observer: O,
) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
    O: FnMut(&StepView<N>) -> Result<StepControl>,
{
    let (x_start, x_end) = span;
    if !x_start.is_finite() || !x_end.is_finite() {
        return Err(Error::Invalid("integration span must be finite".into()));
    }
    let dir = (x_end - x_start).signum();
    let span_len = (x_end - x_start).abs();

    let mut sol = OdeSolution {
        xs: vec![x_start],
        ys: vec![y0],
        derivs: Vec::new(),
        dense: Vec::new(),
        n_accepted: 0,
        n_rejected: 0,
        n_eval: 0,
        stopped_early: false,
    };

    let f0 = f(x_start, &y0)?;
    sol.n_eval += 1;
    sol.derivs.push(f0);
    if span_len == 0.0 {
        return Ok(sol);
    }

    let h_max = opts.h_max.unwrap_or(span_len).min(span_len);
    let mut h = match opts.fixed_step.or(opts.h_init) {
        Some(h) => h.abs().min(h_max) * dir,
        None => initial_step(&mut f, x_start, &y0, &f0, dir, h_max, opts, &mut sol.n_eval)?,
    };

    let mut x = x_start;
    let mut y = y0;
    let mut k1 = f0;
    let h_floor_scale = 1e-14;
    let mut rejected_last = false;

    for _ in 0..opts.max_steps {
        let h_floor = h_floor_scale * x.abs().max(span_len);
        // Final step lands exactly on the endpoint.
        if (x + h - x_end) * dir > 0.0 {
            h = x_end - x;
        }

        let mut k = [SVector::<f64, N>::zeros(); 7];
        k[0] = k1;
        let mut stage_err: Option<Error> = None;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys += *kj * (A[s][j] * h);
            }
            match f(x + C[s] * h, &ys) {
                Ok(v) => k[s] = v,
                Err(e) => {
                    stage_err = Some(e);
                    break;
                }
            }
            sol.n_eval += 1;
        }

        if let Some(e) = stage_err {
            // The stage may only have overshot into a bad region; retry
            // smaller until the refusal happens at genuinely small steps.
            if opts.fixed_step.is_none() && h.abs() > h_floor {
                h *= 0.25;
                sol.n_rejected += 1;
                rejected_last = true;
                continue;
            }
            return Err(e);
        }

        let y1 = y + (k[0] * A[6][0] + k[2] * A[6][2] + k[3] * A[6][3] + k[4] * A[6][4] + k[5] * A[6][5]) * h;
        // k7 is the derivative at the new point (FSAL).
        let k7 = match f(x + h, &y1) {
            Ok(v) => {
                sol.n_eval += 1;
                v
            }
            Err(e) => {
                if opts.fixed_step.is_none() && h.abs() > h_floor {
                    h *= 0.25;
                    sol.n_rejected += 1;
                    rejected_last = true;
                    continue;
                }
                return Err(e);
            }
        };
        k[6] = k7;

        let finite = y1.iter().all(|v| v.is_finite());
        let err_vec = (k[0] * E[0] + k[2] * E[2] + k[3] * E[3] + k[4] * E[4] + k[5] * E[5] + k[6] * E[6]) * h;
        let err = if finite {
            error_norm(&err_vec, &y, &y1, opts.atol, opts.rtol)
        } else {
            f64::INFINITY
        };

        let accept = opts.fixed_step.is_some() || err <= 1.0;
        if !accept {
            if h.abs() <= h_floor {
                if !finite {
                    return Err(Error::NonFinite { xi: x });
                }
                return Err(Error::StepFailure { xi: x, step: h });
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            sol.n_rejected += 1;
            rejected_last = true;
            continue;
        }
        if !finite {
            return Err(Error::NonFinite { xi: x });
        }

        // Dense-output coefficients for this step.
        let ydiff = y1 - y;
        let bspl = k[0] * h - ydiff;
        let mut cont5 = SVector::<f64, N>::zeros();
        for (i, di) in D.iter().enumerate() {
            if *di != 0.0 {
                cont5 += k[i] * *di;
            }
        }
        let dense = DenseStep {
            x0: x,
            h,
            cont: [y, ydiff, bspl, ydiff - k[6] * h - bspl, cont5 * h],
        };

        let x1 = x + h;
        sol.n_accepted += 1;
        let view = StepView { x0: x, x1, y0: &y, y1: &y1, f1: &k[6], dense: &dense };
        let control = observer(&view)?;

        sol.xs.push(x1);
        sol.ys.push(y1);
        sol.derivs.push(k[6]);
        sol.dense.push(dense);

        x = x1;
        y = y1;
        k1 = k7;

        if let StepControl::Stop = control {
            sol.stopped_early = true;
            return Ok(sol);
        }
        if (x - x_end) * dir >= 0.0 {
            return Ok(sol);
        }

        if let Some(hf) = opts.fixed_step {
            h = hf.abs() * dir;
        } else {
            let fac_max = if rejected_last { 1.0 } else { 5.0 };
            let fac = if err == 0.0 { fac_max } else { (0.9 * err.powf(-0.2)).clamp(0.2, fac_max) };
            h = (h * fac).abs().min(h_max) * dir;
            rejected_last = false;
        }
    }

    Err(Error::MaxStepsExceeded { xi: x, max_steps: opts.max_steps })
}

/// Standard automatic initial step: match the scale of the first derivative
/// and probe the second one with an explicit Euler step.
fn initial_step<const N: usize, F>(
    f: &mut F,
    x0: f64,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    dir: f64,
    h_max: f64,
    opts: &Options,
    n_eval: &mut usize,
) -> Result<f64>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let sc = |y: &SVector<f64, N>, i: usize| opts.atol + opts.rtol * y[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        d0 += (y0[i] / sc(y0, i)).powi(2);
        d1 += (f0[i] / sc(y0, i)).powi(2);
    }
    d0 = (d0 / N as f64).sqrt();
    d1 = (d1 / N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(h_max);

    let y1 = y0 + f0 * (h0 * dir);
    let d2 = match f(x0 + h0 * dir, &y1) {
        Ok(f1) => {
            *n_eval += 1;
            let mut acc = 0.0;
            for i in 0..N {
                acc += ((f1[i] - f0[i]) / sc(y0, i)).powi(2);
            }
            (acc / N as f64).sqrt() / h0
        }
        Err(_) => 0.0,
    };

    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok(h0.min(h1).min(h_max).max(1e-12) * dir)
}
