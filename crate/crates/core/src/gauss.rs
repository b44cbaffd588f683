//! Standard normal machinery and UCaC arithmetic.
//!
//! Under Gaussian usage the chance constraint `Pr(load ≤ V) ≥ α` becomes
//! `Σμ + D(α)·√(Σb) ≤ V` with `D(α) = Φ⁻¹(α)`. The left side is the machine's
//! used capacity at confidence.

use std::f64::consts::{PI, SQRT_2};

use crate::model::{ClusterState, MachineLoad, Placement, ServiceSpec};
use crate::{Error, Result};

/// Absolute slack on every UCaC-versus-capacity comparison.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Confidence level `α` together with its cached quantile `D(α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confidence {
    alpha: f64,
    d_alpha: f64,
}

impl Confidence {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self { alpha, d_alpha: normal_quantile(alpha)? })
    }

    /// Confidence whose quantile is exactly `d_alpha`.
    pub fn from_quantile(d_alpha: f64) -> Result<Self> {
        if !(d_alpha.is_finite() && d_alpha > 0.0) {
            return Err(Error::InvalidAlpha(normal_cdf(d_alpha)));
        }
        Ok(Self { alpha: normal_cdf(d_alpha), d_alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `D(α) = Φ⁻¹(α)`.
    pub fn d_alpha(&self) -> f64 {
        self.d_alpha
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against [`normal_cdf`], which brings the result to full
/// double precision over the whole open interval.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let x = acklam(p);
    // Halley refinement: e is the CDF residual, u the Newton step.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

#[allow(clippy::excessive_precision)]
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Complementary error function, Cephes rational approximations
/// (relative error below 1e-15 on the double range).
#[allow(clippy::excessive_precision)]
pub fn erfc(a: f64) -> f64 {
    const P: [f64; 9] = [
        2.46196981473530512524e-10,
        5.64189564831068821977e-1,
        7.46321056442269912687e0,
        4.86371970985681366614e1,
        1.96520832956077098242e2,
        5.26445194995477358631e2,
        9.34528527171957607540e2,
        1.02755188689515710272e3,
        5.57535335369399327526e2,
    ];
    const Q: [f64; 8] = [
        1.32281951154744992508e1,
        8.67072140885989742329e1,
        3.54937778887819891062e2,
        9.75708501743205489753e2,
        1.82390916687909736289e3,
        2.24633760818710981792e3,
        1.65666309194161350182e3,
        5.57535340817727675546e2,
    ];
    const R: [f64; 6] = [
        5.64189583547755073984e-1,
        1.27536670759978104416e0,
        5.01905042251180477414e0,
        6.16021097993053585195e0,
        7.40974269950448939160e0,
        2.97886665372100240670e0,
    ];
    const S: [f64; 6] = [
        2.26052863220117276590e0,
        9.39603524938001434673e0,
        1.20489539808096656605e1,
        1.70814450747565897222e1,
        9.60896809063285878198e0,
        3.36907645100081516050e0,
    ];
    const MAXLOG: f64 = 7.09782712893383996843e2;

    if a.is_nan() {
        return f64::NAN;
    }
    let x = a.abs();
    if x < 1.0 {
        return 1.0 - erf(a);
    }
    if a * a > MAXLOG {
        return if a < 0.0 { 2.0 } else { 0.0 };
    }
    let z = expx2_neg(a);
    let (p, q) = if x < 8.0 { (polevl(x, &P), p1evl(x, &Q)) } else { (polevl(x, &R), p1evl(x, &S)) };
    let y = z * p / q;
    if a < 0.0 {
        2.0 - y
    } else {
        y
    }
}

/// Error function; only called directly for `|x| ≤ 1`.
#[allow(clippy::excessive_precision)]
pub fn erf(x: f64) -> f64 {
    const T: [f64; 5] = [
        9.60497373987051638749e0,
        9.00260197203842689217e1,
        2.23200534594684319226e3,
        7.00332514112805075473e3,
        5.55923013010394962768e4,
    ];
    const U: [f64; 5] = [
        3.35617141647503099647e1,
        5.21357949780152679795e2,
        4.59432382970980127987e3,
        2.26290000613890934246e4,
        4.92673942608635921086e4,
    ];
    if x.abs() > 1.0 {
        return 1.0 - erfc(x);
    }
    let z = x * x;
    x * polevl(z, &T) / p1evl(z, &U)
}

/// `exp(-x²)` without the error amplification of forming `x²` directly.
fn expx2_neg(x: f64) -> f64 {
    const M: f64 = 128.0;
    const MINV: f64 = 1.0 / 128.0;
    let x = x.abs();
    let m = MINV * (M * x + 0.5).floor();
    let f = x - m;
    let u = m * m;
    let u1 = 2.0 * m * f + f * f;
    (-u).exp() * (-u1).exp()
}

fn polevl(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

fn p1evl(x: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().fold(1.0, |acc, &c| acc * x + c)
}

/// `Σμ + D(α)·√(Σb)`.
pub fn machine_ucac(load: MachineLoad, conf: Confidence) -> f64 {
    if load.sum_variance <= 0.0 {
        return load.sum_mean;
    }
    load.sum_mean + conf.d_alpha * load.sum_variance.sqrt()
}

/// UCaC of every machine after an optional placement.
pub fn machine_ucacs(
    cluster: &ClusterState,
    placement: Option<&Placement>,
    services: &[ServiceSpec],
    conf: Confidence,
) -> Vec<f64> {
    (0..cluster.machine_count())
        .map(|i| {
            let mut load = MachineLoad::of_counts(cluster.initial.row(i), services);
            if let Some(p) = placement {
                load = p.alloc.row(i).iter().zip(services).fold(load, |l, (&c, s)| l.with(s, c));
            }
            machine_ucac(load, conf)
        })
        .collect()
}

/// Sum of machine UCaCs; empty machines contribute zero.
pub fn cluster_ucac(
    cluster: &ClusterState,
    placement: Option<&Placement>,
    services: &[ServiceSpec],
    conf: Confidence,
) -> f64 {
    machine_ucacs(cluster, placement, services, conf).iter().sum()
}

/// The deterministic form of the chance constraint.
pub fn feasible(load: MachineLoad, conf: Confidence, capacity: f64) -> bool {
    machine_ucac(load, conf) <= capacity + FEASIBILITY_TOL
}

/// Largest `w` such that `w` more containers of `service` keep the machine
/// feasible. The UCaC is strictly increasing in `w`, so binary search is exact.
pub fn max_fit_count(service: &ServiceSpec, base: MachineLoad, conf: Confidence, capacity: f64) -> u32 {
    let fits = |w: u32| feasible(base.with(service, w), conf, capacity);
    if !fits(0) || !fits(1) {
        return 0;
    }
    // Mean alone bounds the count from above.
    let mut hi = ((capacity + FEASIBILITY_TOL - base.sum_mean) / service.mean).floor().max(1.0) as u64 + 1;
    hi = hi.min(u64::from(u32::MAX));
    let mut lo = 1u64;
    while fits(hi as u32) && hi < u64::from(u32::MAX) {
        lo = hi;
        hi = (hi * 2).min(u64::from(u32::MAX));
    }
    // Invariant: fits(lo) && !fits(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid as u32) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layout, ServiceSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn conf(alpha: f64) -> Confidence {
        Confidence::new(alpha).unwrap()
    }

    /// Confidence with a prescribed `D(α)`, for hand-checkable examples.
    fn with_d(d: f64) -> Confidence {
        Confidence::from_quantile(d).unwrap()
    }

    fn svc(mean: f64, var: f64) -> ServiceSpec {
        ServiceSpec::new("s", mean, var, mean * 4.0)
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(normal_quantile(0.99).unwrap(), 2.326, epsilon = 1e-3);
        assert_abs_diff_eq!(normal_quantile(0.995).unwrap(), 2.576, epsilon = 1e-3);
        assert_abs_diff_eq!(normal_quantile(0.999).unwrap(), 3.09, epsilon = 1e-3);
        // Tabulated quantiles to 16 digits.
        assert_abs_diff_eq!(normal_quantile(0.975).unwrap(), 1.959963984540054, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_quantile(0.999).unwrap(), 3.090232306167814, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_quantile(1e-10).unwrap(), -6.361340902404056, epsilon = 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_symmetry() {
        for &p in &[1e-6, 0.01, 0.2, 0.4, 0.49] {
            let lo = normal_quantile(p).unwrap();
            let hi = normal_quantile(1.0 - p).unwrap();
            assert_abs_diff_eq!(lo, -hi, epsilon = 1e-9);
        }
    }

    #[test]
    fn erfc_matches_libm() {
        let mut x = -6.0;
        while x <= 9.0 {
            let ours = erfc(x);
            let theirs = libm::erfc(x);
            assert!((ours - theirs).abs() <= 1e-14 * theirs, "x={x} {ours} {theirs}");
            x += 0.013;
        }
    }

    #[test]
    fn confidence_range() {
        assert!(Confidence::new(0.5).is_err());
        assert!(Confidence::new(1.0).is_err());
        let c = conf(0.99);
        assert!(c.d_alpha() > 0.0);
        assert_abs_diff_eq!(c.d_alpha(), 2.326347874040841, epsilon = 1e-8);
    }

    #[test]
    fn worked_machine_example() {
        let services = [svc(2.0, 0.5), svc(2.0, 1.0), svc(3.0, 1.5)];
        let load = MachineLoad::of_counts(&[1, 1, 1], &services);
        // 7 + 2.576·√3 with the two-sided 99% multiplier.
        let two_sided = with_d(2.576);
        assert_abs_diff_eq!(machine_ucac(load, two_sided), 11.46, epsilon = 0.01);
        // 7 + 2.326·√3 with the one-sided quantile.
        assert_abs_diff_eq!(machine_ucac(load, conf(0.99)), 7.0 + 2.326347874040841 * 3f64.sqrt(), epsilon = 1e-8);
        assert!(feasible(load, two_sided, 12.0));
        assert!(!feasible(load, two_sided, 10.0));

        let cluster =
            ClusterState { capacity: 12.0, initial: Layout::from_rows(&[vec![1, 1, 1], vec![1, 1, 1]], 3).unwrap() };
        assert_abs_diff_eq!(cluster_ucac(&cluster, None, &services, two_sided), 22.92, epsilon = 0.02);
        let empty = ClusterState::empty(12.0, 3, 3);
        assert_eq!(cluster_ucac(&empty, None, &services, conf(0.99)), 0.0);
    }

    #[test]
    fn trivial_loads() {
        assert_eq!(machine_ucac(MachineLoad::EMPTY, conf(0.99)), 0.0);
        assert_eq!(machine_ucac(MachineLoad::new(5.0, 0.0), conf(0.999)), 5.0);
        assert!(feasible(MachineLoad::EMPTY, conf(0.99), 1e-3));
    }

    #[test]
    fn split_versus_merged() {
        // Two machines (μ=6, b=4) against one machine holding both, D=2.
        let d = with_d(2.0);
        let split = 2.0 * machine_ucac(MachineLoad::new(6.0, 4.0), d);
        let merged = machine_ucac(MachineLoad::new(12.0, 8.0), d);
        assert_abs_diff_eq!(split, 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(merged, 12.0 + 2.0 * 8f64.sqrt(), epsilon = 1e-12);
        assert!(merged <= split);
    }

    #[test]
    fn max_fit_examples() {
        // Oracle: enumerate w = 0..=5 directly.
        let d = with_d(2.0);
        let s = svc(2.0, 1.0);
        let scan = (0..=5u32).filter(|&w| 2.0 * f64::from(w) + 2.0 * f64::from(w).sqrt() <= 10.0).max().unwrap();
        assert_eq!(scan, 3);
        assert_eq!(max_fit_count(&s, MachineLoad::EMPTY, d, 10.0), 3);
        assert_eq!(max_fit_count(&svc(3.0, 0.0), MachineLoad::EMPTY, d, 10.0), 3);
        assert_eq!(max_fit_count(&s, MachineLoad::new(10.0, 0.0), d, 10.0), 0);
        assert_eq!(max_fit_count(&svc(10.0, 0.0), MachineLoad::EMPTY, d, 10.0), 1);
    }

    proptest! {
        #[test]
        fn max_fit_agrees_with_linear_scan(
            mean in 0.1f64..5.0, var in 0.0f64..4.0,
            base_mean in 0.0f64..20.0, base_var in 0.0f64..10.0,
            alpha in 0.6f64..0.9999, cap in 5.0f64..40.0,
        ) {
            let c = conf(alpha);
            let s = svc(mean, var);
            let base = MachineLoad::new(base_mean, base_var);
            prop_assume!(feasible(base, c, cap));
            let r = max_fit_count(&s, base, c, cap);
            let mut scan = 0;
            while feasible(base.with(&s, scan + 1), c, cap) {
                scan += 1;
            }
            prop_assert_eq!(r, scan);
            prop_assert!(feasible(base.with(&s, r), c, cap));
            prop_assert!(!feasible(base.with(&s, r + 1), c, cap));
        }

        #[test]
        fn ucac_strictly_increases(mean in 0.01f64..10.0, var in 0.0f64..5.0, bm in 0.0f64..50.0, bv in 0.0f64..50.0) {
            let c = conf(0.99);
            let base = MachineLoad::new(bm, bv);
            prop_assert!(machine_ucac(base.with(&svc(mean, var), 1), c) > machine_ucac(base, c));
        }

        #[test]
        fn sqrt_marginal_decrease(x1 in 1e-6f64..1e3, gap in 1e-6f64..1e3, delta in 1e-6f64..1e3) {
            let x2 = x1 + gap;
            prop_assert!((x1 + delta).sqrt() - x1.sqrt() > (x2 + delta).sqrt() - x2.sqrt());
        }

        #[test]
        fn sqrt_pooling(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            prop_assert!(a.sqrt() + b.sqrt() >= (a + b).sqrt());
        }
    }

    #[test]
    fn quantile_round_trip_grid() {
        for i in 1..=997 {
            let p = 0.001 + 0.998 * f64::from(i) / 998.0;
            let x = normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() <= 1e-8, "p={p}");
            let oracle = 0.5 * statrs::function::erf::erfc(-x / SQRT_2);
            assert!((oracle - p).abs() <= 1e-8, "p={p}");
        }
    }
}
