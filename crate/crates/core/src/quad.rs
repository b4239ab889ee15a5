//! Adaptive Gauss-Kronrod quadrature (21-point rule, worst-first
//! bisection) for the line integrals that are cross-checked against
//! their differential-equation counterparts.
//!
//! Integrands are fallible so that domain refusals (turning points,
//! table boundaries) surface as typed errors instead of poisoning the
//! sum with NaNs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// 21-point Kronrod abscissae on [0, 1]; even indices are the Kronrod
/// extension, odd indices the embedded 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One application of the 21-point rule on [a, b]: (value, error estimate).
fn qk21<F>(f: &mut F, a: f64, b: f64, n_eval: &mut usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half_len = 0.5 * (b - a);
    let abs_half_len = half_len.abs();

    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    let f_center = f(center)?;
    *n_eval += 21;

    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[10];
    let mut res_abs = res_kronrod.abs();

    for (j, gauss_w) in WG.iter().enumerate() {
        let jtw = 2 * j + 1;
        let abscissa = half_len * XGK[jtw];
        let fval1 = f(center - abscissa)?;
        let fval2 = f(center + abscissa)?;
        fv1[jtw] = fval1;
        fv2[jtw] = fval2;
        let fsum = fval1 + fval2;
        res_gauss += gauss_w * fsum;
        res_kronrod += WGK[jtw] * fsum;
        res_abs += WGK[jtw] * (fval1.abs() + fval2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let abscissa = half_len * XGK[jtwm1];
        let fval1 = f(center - abscissa)?;
        let fval2 = f(center + abscissa)?;
        fv1[jtwm1] = fval1;
        fv2[jtwm1] = fval2;
        res_kronrod += WGK[jtwm1] * (fval1 + fval2);
        res_abs += WGK[jtwm1] * (fval1.abs() + fval2.abs());
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let err = (res_kronrod - res_gauss) * half_len;
    res_kronrod *= half_len;
    res_abs *= abs_half_len;
    res_asc *= abs_half_len;

    if !res_kronrod.is_finite() {
        return Err(Error::NonFinite { xi: center });
    }
    Ok((res_kronrod, rescale_error(err, res_abs, res_asc)))
}

#[derive(Debug, Clone)]
pub struct QuadOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_subdivisions: usize,
    /// Interior points where the interval is pre-split before adapting;
    /// useful when the integrand's oscillation scale is known up front.
    pub breakpoints: Vec<f64>,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rtol: 1e-11, atol: 1e-14, max_subdivisions: 400, breakpoints: Vec::new() }
    }
}

/// Pre-split points spaced by half-periods of the fastest oscillation,
/// capped so pathological frequencies cannot explode the segment count.
pub fn oscillation_breakpoints(a: f64, b: f64, omega: f64, cap: usize) -> Vec<f64> {
    if omega.abs() < f64::EPSILON || a == b {
        return Vec::new();
    }
    let half_period = std::f64::consts::PI / omega.abs();
    let n = (((b - a).abs() / half_period).ceil() as usize).min(cap);
    if n < 2 {
        return Vec::new();
    }
    (1..n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.a == other.a
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        // Worst error first; ties broken by position for determinism.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub n_eval: usize,
}

/// Integrates f over [a, b] (either orientation), bisecting the segment
/// with the largest error estimate until the requested tolerance holds.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, n_eval: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let mut nodes: Vec<f64> = vec![lo];
    let mut bps: Vec<f64> = opts
        .breakpoints
        .iter()
        .copied()
        .filter(|p| *p > lo && *p < hi)
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    nodes.extend(bps);
    nodes.push(hi);

    let mut n_eval = 0usize;
    let mut heap = BinaryHeap::new();
    for w in nodes.windows(2) {
        let (value, error) = qk21(&mut f, w[0], w[1], &mut n_eval)?;
        heap.push(Segment { a: w[0], b: w[1], value, error });
    }

    let mut splits = 0usize;
    loop {
        let total: f64 = heap.iter().map(|s| s.value).sum();
        let total_err: f64 = heap.iter().map(|s| s.error).sum();
        if total_err <= opts.atol.max(opts.rtol * total.abs()) {
            return Ok(QuadResult { value: sign * total, error: total_err, n_eval });
        }
        if splits >= opts.max_subdivisions {
            return Err(Error::QuadratureFailure { a, b, estimate: total_err });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at roundoff width; the estimate will not improve.
            return Err(Error::QuadratureFailure { a, b, estimate: total_err });
        }
        let (v1, e1) = qk21(&mut f, worst.a, mid, &mut n_eval)?;
        let (v2, e2) = qk21(&mut f, mid, worst.b, &mut n_eval)?;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        splits += 1;
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on
/// the Legendre recurrence. Used for the fixed-order tensor quadratures
/// of the wave-packet integrals, where determinism requires a fixed
/// node count rather than adaptive subdivision.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// The same rule mapped onto [a, b].
pub(crate) fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|wi| wi * half).collect(),
    )
}

/// Composite Gauss-Legendre rule: `panels` equal panels of `nodes` points.
pub(crate) fn composite_gauss_legendre(
    a: f64,
    b: f64,
    panels: usize,
    nodes: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(panels * nodes);
    let mut ws = Vec::with_capacity(panels * nodes);
    for p in 0..panels {
        let lo = a + (b - a) * p as f64 / panels as f64;
        let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
        let (x, w) = gauss_legendre_on(nodes, lo, hi);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| Ok(3.0 * x * x), 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| Ok(x.exp()), 1.0, 0.0, &QuadOptions::default()).unwrap();
        assert!((r.value - (1.0 - std::f64::consts::E)).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_with_breakpoints() {
        let omega = 25.0;
        let b = 8.0 * std::f64::consts::PI;
        let opts = QuadOptions {
            breakpoints: oscillation_breakpoints(0.0, b, omega, 256),
            ..QuadOptions::default()
        };
        let r = integrate(|x| Ok((omega * x).cos() * (-0.1 * x).exp()), 0.0, b, &opts).unwrap();
        // Exact: Re[ (e^{(i w - 0.1) b} - 1) / (i w - 0.1) ]
        let denom = 0.01 + omega * omega;
        let exact = ((-0.1 * b).exp() * (omega * (omega * b).sin() - 0.1 * (omega * b).cos())
            + 0.1)
            / denom;
        assert!((r.value - exact).abs() < 1e-11, "got {} want {exact}", r.value);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let opts = QuadOptions { max_subdivisions: 2, rtol: 1e-14, atol: 0.0, ..QuadOptions::default() };
        let res = integrate(|x| Ok((400.0 * x).cos().abs()), 0.0, 10.0, &opts);
        match res {
            Err(Error::QuadratureFailure { .. }) => {}
            other => panic!("expected QuadratureFailure, got {other:?}"),
        }
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        // An n-point rule integrates degree 2n-1 exactly.
        for n in [2usize, 5, 8, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert_eq!(x.len(), n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "weights sum {total} for n={n}");
            let deg = 2 * n - 1;
            let quad: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * xi.powi(deg as i32 - 1))
                .sum();
            // Integral of x^(deg-1) over [-1,1]: 0 if deg-1 odd, 2/deg if even.
            let exact = if (deg - 1) % 2 == 1 { 0.0 } else { 2.0 / deg as f64 };
            assert!((quad - exact).abs() < 1e-12, "n={n}: {quad} vs {exact}");
        }

        // Composite rule on a transcendental integrand.
        let (xs, ws) = composite_gauss_legendre(0.0, 2.0, 4, 6);
        let got: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.exp()).sum();
        assert!((got - (2.0f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn integrand_refusal_propagates() {
        let res = integrate(
            |x| {
                if x > 0.9 {
                    Err(Error::TableDomain { xi: x, min: 0.0, max: 0.9 })
                } else {
                    Ok(x)
                }
            },
            0.0,
            1.0,
            &QuadOptions::default(),
        );
        assert!(matches!(res, Err(Error::TableDomain { .. })));
    }
}
