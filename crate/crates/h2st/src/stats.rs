//! Exact numerical kernels for the calibrated detection test: the
//! regularized incomplete Beta function, its quantile, the Clopper-Pearson
//! binomial interval, and the sliding window behind the accuracy estimate.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Iteration cap shared by the continued fraction and the quantile solver.
const MAX_ITER: usize = 200;

/// Convergence tolerance for the quantile root-finder.
const QUANTILE_TOL: f64 = 1e-12;

/// Two-sided exact binomial confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpInterval {
    pub lower: f64,
    pub upper: f64,
}

impl CpInterval {
    /// True iff `p` lies inside the closed interval.
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_shape(what: &'static str, a: f64, b: f64) -> Result<()> {
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain {
            what,
            detail: format!("shape parameters must be positive finite, got a={a}, b={b}"),
        });
    }
    Ok(())
}

/// Natural log of the Gamma function (Lanczos, g = 7, 9 terms).
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // Reflection: Γ(z)Γ(1−z) = π / sin(πz)
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * z).sin().ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut x = 0.99999999999980993;
        for (i, &c) in COEFFS.iter().enumerate() {
            x += c / (z + (i + 1) as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete Beta function `I_x(a, b)`.
///
/// Continued fraction (modified Lentz), switching to `1 − I_{1−x}(b, a)`
/// when `x > (a+1)/(a+b+2)` so the fraction always converges fast.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_shape("reg_inc_beta", a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain {
            what: "reg_inc_beta",
            detail: format!("x must be in [0,1], got {x}"),
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_cf(1.0 - x, b, a))
    } else {
        Ok(beta_cf(x, a, b))
    }
}

/// `I_x(a,b) = x^a (1-x)^b / (a B(a,b)) / cf` via modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let ln_prefix = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let prefix = ln_prefix.exp() / a;

    let tiny = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;

        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;

        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }

    (prefix * h).clamp(0.0, 1.0)
}

/// Beta density `x^{a-1} (1-x)^{b-1} / B(a,b)`, zero outside `(0,1)`.
fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
}

/// `p`-th quantile of the Beta(a, b) distribution.
///
/// Safeguarded Newton on `I_x(a,b) − p`: every iterate stays inside a
/// shrinking bracket, falling back to bisection whenever the Newton step
/// leaves it or fails to make progress. `Q(0)=0` and `Q(1)=1` by definition.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> Result<f64> {
    check_shape("beta_quantile", a, b)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            what: "beta_quantile",
            detail: format!("p must be in [0,1], got {p}"),
        });
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut x = a / (a + b); // start at the mean
    for _ in 0..MAX_ITER {
        let f = reg_inc_beta(x, a, b)? - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if f.abs() <= QUANTILE_TOL || hi - lo <= QUANTILE_TOL {
            break;
        }
        let pdf = beta_pdf(x, a, b);
        let newton = if pdf > 0.0 { x - f / pdf } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// Clopper-Pearson two-sided interval for `s_hat` successes in `n` trials.
///
/// `[Q(α/2; ŝ, n−ŝ+1), Q(1−α/2; ŝ+1, n−ŝ)]`, with the conventional
/// endpoints `lower = 0` at `ŝ = 0` and `upper = 1` at `ŝ = n`.
pub fn clopper_pearson(s_hat: u64, n: u64, alpha: f64) -> Result<CpInterval> {
    if n == 0 {
        return Err(Error::Domain {
            what: "clopper_pearson",
            detail: "n must be at least 1".to_string(),
        });
    }
    if s_hat > n {
        return Err(Error::Domain {
            what: "clopper_pearson",
            detail: format!("s_hat {s_hat} exceeds n {n}"),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            what: "clopper_pearson",
            detail: format!("alpha must be in (0,1), got {alpha}"),
        });
    }
    let s = s_hat as f64;
    let nf = n as f64;
    let lower = if s_hat == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, s, nf - s + 1.0)?
    };
    let upper = if s_hat == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, s + 1.0, nf - s)?
    };
    Ok(CpInterval { lower, upper })
}

/// Ring buffer of per-step source/target correctness pairs.
///
/// One pair records whether the source-target classifier labeled the
/// source and target of one detection step correctly. The most recent
/// `capacity` pairs back the accuracy estimate; older pairs are evicted.
#[derive(Debug, Clone)]
pub struct WindowState {
    capacity: usize,
    entries: VecDeque<(bool, bool)>,
}

impl WindowState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a correctness pair, evicting the oldest when full.
    pub fn push(&mut self, source_correct: bool, target_correct: bool) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((source_correct, target_correct));
    }

    /// Windowed accuracy estimate: correct indicators over `2 · pairs`.
    ///
    /// Returns `(mu, pairs)` where `pairs` is the number of pairs actually
    /// stored, so the estimate remains usable while the window fills.
    pub fn mu_hat(&self) -> Result<(f64, usize)> {
        if self.entries.is_empty() {
            return Err(Error::EmptyInput("window holds no correctness pairs"));
        }
        let correct: usize = self
            .entries
            .iter()
            .map(|&(s, t)| usize::from(s) + usize::from(t))
            .sum();
        let pairs = self.entries.len();
        Ok((correct as f64 / (2 * pairs) as f64, pairs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature of the Beta density; independent of the
    /// continued fraction it checks.
    fn beta_cdf_by_quadrature(x: f64, a: f64, b: f64) -> f64 {
        fn simpson(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
            (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi))
        }
        fn adapt(
            f: &impl Fn(f64) -> f64,
            lo: f64,
            hi: f64,
            whole: f64,
            tol: f64,
            depth: usize,
        ) -> f64 {
            let mid = 0.5 * (lo + hi);
            let left = simpson(f, lo, mid);
            let right = simpson(f, mid, hi);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                adapt(f, lo, mid, left, tol / 2.0, depth - 1)
                    + adapt(f, mid, hi, right, tol / 2.0, depth - 1)
            }
        }
        let pdf = |t: f64| beta_pdf(t, a, b);
        adapt(&pdf, 0.0, x, simpson(&pdf, 0.0, x), 1e-12, 48)
    }

    /// Plain bisection on `reg_inc_beta`, the oracle for the Newton solver.
    fn beta_quantile_bisect(p: f64, a: f64, b: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if reg_inc_beta(mid, a, b).unwrap() < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn reg_inc_beta_boundaries_and_symmetry() {
        assert_eq!(reg_inc_beta(0.0, 3.0, 5.0).unwrap(), 0.0);
        assert_eq!(reg_inc_beta(1.0, 3.0, 5.0).unwrap(), 1.0);
        // Beta(2,2) is symmetric about 1/2.
        assert!((reg_inc_beta(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn reg_inc_beta_matches_quadrature_oracle() {
        // Frozen scipy value for the headline point.
        let v = reg_inc_beta(0.3, 5.0, 7.0).unwrap();
        assert!((v - 0.2103046172999999).abs() < 1e-12);
        for (x, a, b) in [
            (0.3, 5.0, 7.0),
            (0.12, 8.0, 2.0),
            (0.5, 2.0, 2.0),
            (0.85, 3.0, 9.0),
            (0.42, 11.0, 4.5),
        ] {
            let cf = reg_inc_beta(x, a, b).unwrap();
            let quad = beta_cdf_by_quadrature(x, a, b);
            assert!(
                (cf - quad).abs() <= 1e-9,
                "I_{x}({a},{b}): cf {cf} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn reg_inc_beta_monotone_in_x() {
        let mut prev = 0.0;
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            let v = reg_inc_beta(x, 2.5, 7.0).unwrap();
            assert!(v >= prev, "not monotone at x={x}");
            prev = v;
        }
    }

    #[test]
    fn reg_inc_beta_domain_errors() {
        assert!(reg_inc_beta(-0.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(1.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 1.0, -2.0).is_err());
    }

    #[test]
    fn quantile_trivial_cases() {
        assert!((beta_quantile(0.7, 1.0, 1.0).unwrap() - 0.7).abs() < 1e-12);
        assert!((beta_quantile(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(beta_quantile(0.0, 3.0, 4.0).unwrap(), 0.0);
        assert_eq!(beta_quantile(1.0, 3.0, 4.0).unwrap(), 1.0);
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        let q = beta_quantile(0.975, 11.0, 10.0).unwrap();
        let oracle = beta_quantile_bisect(0.975, 11.0, 10.0);
        assert!((q - oracle).abs() < 1e-10);
        // Frozen scipy value.
        assert!((q - 0.7280421504392081).abs() < 1e-9);
    }

    #[test]
    fn quantile_closed_forms() {
        // Beta(2,1): CDF x^2, so Q(p) = sqrt(p).
        let q = beta_quantile(0.025, 2.0, 1.0).unwrap();
        assert!((q - 0.025f64.sqrt()).abs() < 1e-12);
        // Beta(40,1): CDF x^40.
        let q = beta_quantile(0.025, 40.0, 1.0).unwrap();
        assert!((q - 0.025f64.powf(1.0 / 40.0)).abs() < 1e-12);
    }

    #[test]
    fn quantile_roundtrip_grid() {
        let ps = [0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999];
        let shapes = [0.5, 1.0, 2.0, 5.0, 12.5, 50.0];
        for &p in &ps {
            for &a in &shapes {
                for &b in &shapes {
                    let q = beta_quantile(p, a, b).unwrap();
                    let back = reg_inc_beta(q, a, b).unwrap();
                    assert!(
                        (back - p).abs() <= 1e-8,
                        "roundtrip p={p} a={a} b={b}: got {back}"
                    );
                }
            }
        }
    }

    #[test]
    fn quantile_monotone_in_p() {
        let mut prev = -1.0;
        for k in 0..=40 {
            let p = k as f64 / 40.0;
            let q = beta_quantile(p, 3.0, 6.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn cp_interval_conventions() {
        let i = clopper_pearson(0, 20, 0.05).unwrap();
        assert_eq!(i.lower, 0.0);
        let i = clopper_pearson(20, 20, 0.05).unwrap();
        assert_eq!(i.upper, 1.0);
    }

    #[test]
    fn cp_interval_frozen_values() {
        // scipy: beta.ppf(0.025,10,11)=0.27195785, beta.ppf(0.975,11,10)=0.72804215
        let i = clopper_pearson(10, 20, 0.05).unwrap();
        assert!((i.lower - 0.27195784956079183).abs() < 1e-9);
        assert!((i.upper - 0.7280421504392081).abs() < 1e-9);
        let i = clopper_pearson(1, 5, 0.1).unwrap();
        assert!((i.lower - 0.010206218313011496).abs() < 1e-9);
        assert!((i.upper - 0.6574083180011386).abs() < 1e-9);
    }

    #[test]
    fn cp_interval_contains_point_estimate() {
        for n in [5u64, 20, 100] {
            for s in 1..n {
                let i = clopper_pearson(s, n, 0.05).unwrap();
                let point = s as f64 / n as f64;
                assert!(
                    i.lower < point && point < i.upper,
                    "CP({s},{n}) must strictly contain {point}"
                );
            }
        }
    }

    #[test]
    fn cp_width_shrinks_with_n() {
        // Fixed ratio s/n = 1/2 and alpha: width non-increasing in n.
        let mut prev = f64::INFINITY;
        for n in [10u64, 20, 40, 80, 160, 320] {
            let i = clopper_pearson(n / 2, n, 0.05).unwrap();
            assert!(i.width() <= prev + 1e-12, "width grew at n={n}");
            prev = i.width();
        }
    }

    #[test]
    fn cp_interval_domain_errors() {
        assert!(clopper_pearson(3, 2, 0.05).is_err());
        assert!(clopper_pearson(1, 2, 0.0).is_err());
        assert!(clopper_pearson(1, 2, 1.0).is_err());
        assert!(clopper_pearson(0, 0, 0.05).is_err());
    }

    #[test]
    fn window_ring_semantics() {
        let mut w = WindowState::new(3);
        assert!(w.mu_hat().is_err());
        w.push(true, true);
        assert_eq!(w.len(), 1);
        assert_eq!(w.mu_hat().unwrap(), (1.0, 1));
        w.push(true, false);
        w.push(false, true);
        w.push(false, false); // evicts the all-correct pair
        assert_eq!(w.len(), 3);
        let (mu, pairs) = w.mu_hat().unwrap();
        assert_eq!(pairs, 3);
        assert!((mu - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn window_mu_hat_extremes() {
        let mut w = WindowState::new(4);
        for _ in 0..4 {
            w.push(true, true);
        }
        assert_eq!(w.mu_hat().unwrap().0, 1.0);
        let mut w = WindowState::new(4);
        for _ in 0..6 {
            w.push(false, false);
        }
        let (mu, pairs) = w.mu_hat().unwrap();
        assert_eq!(mu, 0.0);
        assert_eq!(pairs, 4);
    }

    #[test]
    fn window_half_correct() {
        let mut w = WindowState::new(8);
        w.push(true, true);
        w.push(true, false);
        w.push(false, true);
        w.push(false, false);
        assert!((w.mu_hat().unwrap().0 - 0.5).abs() < 1e-15);
    }
}
