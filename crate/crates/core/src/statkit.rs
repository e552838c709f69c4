//! Scalar statistics for the 2-DoF GLRT: central and noncentral chi-squared
//! laws, the first-order Marcum-Q function, and a guarded bisection.
//!
//! Probabilities are carried together with their complement so that tails
//! near 0 and near 1 keep full relative precision (an ROC evaluated at
//! `P_FA = 1e-6` needs `1 - P_FA` and `P_FA` both exactly).

use crate::error::{Error, Result};

/// A probability `p` paired with its complement `1 - p`.
///
/// Both halves are stored because the kernels below can compute either one
/// without cancellation; `complement()` is then exact rather than `1.0 - p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    p: f64,
    q: f64,
}

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self { p, q: 1.0 - p })
    }

    /// Builds a probability from a separately computed complement.
    pub(crate) fn from_parts(p: f64, q: f64) -> Self {
        Self {
            p: p.clamp(0.0, 1.0),
            q: q.clamp(0.0, 1.0),
        }
    }

    pub fn get(self) -> f64 {
        self.p
    }

    pub fn complement(self) -> f64 {
        self.q
    }

    /// The complementary event.
    pub fn flip(self) -> Self {
        Self { p: self.q, q: self.p }
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.p
    }
}

/// Noncentrality parameter of a 2-DoF noncentral chi-squared law.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Noncentrality(f64);

impl Noncentrality {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("noncentrality {rho} must be finite and >= 0")));
        }
        Ok(Self(rho))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("{name} = {x} must be >= 0")));
    }
    Ok(())
}

/// CDF of the central chi-squared law with two degrees of freedom.
pub fn chi2_2_cdf(x: f64) -> Result<Probability> {
    check_nonneg("x", x)?;
    Ok(Probability::from_parts(-(-0.5 * x).exp_m1(), (-0.5 * x).exp()))
}

/// Inverse of [`chi2_2_cdf`]; uses the stored complement so the round trip
/// is exact even deep in the upper tail.
pub fn chi2_2_inv_cdf(p: Probability) -> Result<f64> {
    if p.complement() <= 0.0 {
        return Err(Error::Domain("inverse CDF at p = 1 diverges".into()));
    }
    if p.complement() > 0.5 {
        Ok(-2.0 * (-p.get()).ln_1p())
    } else {
        Ok(-2.0 * p.complement().ln())
    }
}

/// Half-width of a Poisson(mean) window holding all but a negligible
/// (< 1e-25) amount of mass.
fn poisson_window(mean: f64) -> (usize, usize) {
    let w = 12.0 * mean.sqrt() + 40.0;
    let lo = (mean - w).floor().max(0.0) as usize;
    let hi = (mean + w).ceil() as usize;
    (lo, hi)
}

/// Poisson(mean) pmf over `lo..=hi`, evaluated by recursion outward from the
/// mode so only one log-gamma call is needed.
fn poisson_pmf_range(mean: f64, lo: usize, hi: usize) -> Vec<f64> {
    let mut out = vec![0.0; hi - lo + 1];
    if mean == 0.0 {
        if lo == 0 {
            out[0] = 1.0;
        }
        return out;
    }
    let mode = (mean.floor() as usize).clamp(lo, hi);
    let ln_mode = -mean + mode as f64 * mean.ln() - statrs::function::gamma::ln_gamma(mode as f64 + 1.0);
    out[mode - lo] = ln_mode.exp();
    for k in (mode + 1)..=hi {
        out[k - lo] = out[k - 1 - lo] * mean / k as f64;
    }
    for k in (lo..mode).rev() {
        out[k - lo] = out[k + 1 - lo] * (k + 1) as f64 / mean;
    }
    out
}

/// First-order Marcum-Q function `Q1(a, b)` together with `1 - Q1(a, b)`.
///
/// Uses `Q1(a, b) = P(Y <= X)` with independent `X ~ Poisson(a^2/2)` and
/// `Y ~ Poisson(b^2/2)`, i.e. the Poisson-weighted sum of central
/// chi-squared tails. All terms are nonnegative and evaluated from the mode
/// outward, so neither the value nor its complement suffers cancellation,
/// and nothing overflows however large `a * b` gets. Mass outside the
/// summation windows is below 1e-25.
pub fn marcum_q1(a: f64, b: f64) -> Result<Probability> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "marcum_q1 needs finite arguments, got ({a}, {b})"
        )));
    }
    check_nonneg("a", a)?;
    check_nonneg("b", b)?;
    let lam = 0.5 * a * a;
    let mu = 0.5 * b * b;
    if b == 0.0 {
        return Ok(Probability::from_parts(1.0, 0.0));
    }
    let (xlo, xhi) = poisson_window(lam);
    let (ylo, yhi) = poisson_window(mu);
    if xlo > yhi {
        return Ok(Probability::from_parts(1.0, 0.0));
    }
    if xhi < ylo {
        return Ok(Probability::from_parts(0.0, 1.0));
    }
    let lo = xlo.min(ylo);
    let hi = xhi.max(yhi);
    let px = poisson_pmf_range(lam, lo, hi);
    let py = poisson_pmf_range(mu, lo, hi);
    let n = hi - lo + 1;

    // P(Y <= k) forward, P(Y > k) backward, both as sums of positives.
    let mut cdf_y = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        acc += py[i];
        cdf_y[i] = acc;
    }
    let mut sf_y = vec![0.0; n];
    acc = 0.0;
    for i in (0..n).rev() {
        sf_y[i] = acc;
        acc += py[i];
    }
    let mut q = 0.0;
    let mut qc = 0.0;
    for i in 0..n {
        q += px[i] * cdf_y[i];
        qc += px[i] * sf_y[i];
    }
    // Renormalise away the (tiny) window truncation of the X weights.
    let total = q + qc;
    Ok(Probability::from_parts(q / total, qc / total))
}

/// CDF of the noncentral chi-squared law with two degrees of freedom.
pub fn noncentral_chi2_2_cdf(x: f64, rho: Noncentrality) -> Result<Probability> {
    check_nonneg("x", x)?;
    if rho.get() == 0.0 {
        return chi2_2_cdf(x);
    }
    Ok(marcum_q1(rho.get().sqrt(), x.sqrt())?.flip())
}

/// Bisection defaults for Lagrange-multiplier searches.
pub const BISECT_TOL: f64 = 1e-10;
pub const BISECT_MAX_ITER: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 1100;

/// Final bracket of a bisection run. `lo_value`/`hi_value` are the function
/// values at the bracket ends; `root` is the returned iterate.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub lo_value: f64,
    pub hi_value: f64,
    pub root: f64,
    pub root_value: f64,
}

/// Bisection that also reports the final bracket.
///
/// The lower endpoint may evaluate to `±inf` (e.g. a singular system at
/// `eta = 0`); only its sign is used. If `f(lo)` and `f(hi)` share a sign the
/// bracket is widened by repeatedly doubling its width to the right.
pub fn bisect_bracket<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<Bracket>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) || !(hi > lo) {
        return Err(Error::Domain(format!("bad bisection setup lo={lo} hi={hi} tol={tol}")));
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::Numerical(
            "bisection function returned NaN at bracket end".into(),
        ));
    }
    let exact = |x: f64, fx: f64, lo, hi, flo, fhi| Bracket {
        lo,
        hi,
        lo_value: flo,
        hi_value: fhi,
        root: x,
        root_value: fx,
    };
    if flo == 0.0 {
        return Ok(exact(lo, flo, lo, hi, flo, fhi));
    }
    if fhi == 0.0 {
        return Ok(exact(hi, fhi, lo, hi, flo, fhi));
    }
    let mut doublings = 0;
    while flo.signum() == fhi.signum() {
        if doublings == MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::Bracketing { lo, hi });
        }
        let width = hi - lo;
        hi = lo + 2.0 * width;
        fhi = f(hi);
        if fhi.is_nan() {
            return Err(Error::Numerical(format!("bisection function returned NaN at {hi}")));
        }
        if fhi == 0.0 {
            return Ok(exact(hi, fhi, lo, hi, flo, fhi));
        }
        doublings += 1;
    }
    let lo_positive = flo > 0.0;
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.is_nan() {
            return Err(Error::Numerical(format!("bisection function returned NaN at {mid}")));
        }
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm.abs() <= tol || (hi - lo) <= tol * mid.abs().max(1.0) || mid == lo || mid == hi {
            return Ok(Bracket {
                lo,
                hi,
                lo_value: flo,
                hi_value: fhi,
                root: mid,
                root_value: fm,
            });
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        best: best.0,
    })
}

/// Illinois-modified regula falsi on a bracket with `f(lo) < 0 < f(hi)`.
///
/// Stops once `|f| <= tol` or the bracket is narrower than
/// `tol * max(1, |x|)`; the returned [`Bracket`] keeps the sign convention
/// so callers can fall back to either end.
pub fn illinois<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<Bracket>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) || !(hi > lo) {
        return Err(Error::Domain(format!(
            "bad root-finding setup lo={lo} hi={hi} tol={tol}"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::Numerical("root function returned NaN at bracket end".into()));
    }
    if !(flo < 0.0 && fhi > 0.0) {
        if flo == 0.0 || fhi == 0.0 {
            let (x, fx) = if flo == 0.0 { (lo, flo) } else { (hi, fhi) };
            return Ok(Bracket {
                lo,
                hi,
                lo_value: flo,
                hi_value: fhi,
                root: x,
                root_value: fx,
            });
        }
        return Err(Error::Bracketing { lo, hi });
    }
    // +1 when the last update moved `hi`, -1 for `lo`
    let mut side = 0i8;
    for _ in 0..max_iter {
        let mut x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx.is_nan() {
            return Err(Error::Numerical(format!("root function returned NaN at {x}")));
        }
        if fx.abs() <= tol || (hi - lo) <= tol * x.abs().max(1.0) {
            return Ok(Bracket {
                lo,
                hi,
                lo_value: flo,
                hi_value: fhi,
                root: x,
                root_value: fx,
            });
        }
        if fx > 0.0 {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        best: 0.5 * (lo + hi),
    })
}

/// Root of a monotone function on `[lo, hi]`: returns `x` with `|f(x)| <= tol`
/// or a final bracket narrower than `tol * max(1, |x|)`.
pub fn bisect<F>(f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    bisect_bracket(f, lo, hi, tol, max_iter).map(|b| b.root)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F>(samples: &[f64], cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            let above = (i + 1) as f64 / n - c;
            let below = c - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    #[test]
    fn chi2_cdf_closed_form() {
        assert_eq!(chi2_2_cdf(0.0).unwrap().get(), 0.0);
        assert!((chi2_2_cdf(2.0 * 10f64.ln()).unwrap().get() - 0.9).abs() < 1e-15);
        assert!((chi2_2_cdf(1.0).unwrap().get() - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!(chi2_2_cdf(-1.0).is_err());
    }

    #[test]
    fn chi2_inverse_values() {
        assert_eq!(chi2_2_inv_cdf(p(0.0)).unwrap(), 0.0);
        assert!((chi2_2_inv_cdf(p(0.9)).unwrap() - 4.605170185988091).abs() < 1e-12);
        assert!((chi2_2_inv_cdf(p(0.99)).unwrap() - 9.210340371976182).abs() < 1e-12);
        assert!(chi2_2_inv_cdf(p(1.0)).is_err());
    }

    #[test]
    fn chi2_round_trip_relative() {
        let mut x = 1e-6;
        while x <= 50.0 {
            let back = chi2_2_inv_cdf(chi2_2_cdf(x).unwrap()).unwrap();
            assert!(((back - x) / x).abs() <= 1e-10, "x={x} back={back}");
            x *= 1.37;
        }
    }

    #[test]
    fn marcum_closed_form_cases() {
        let q = marcum_q1(0.0, 3.0).unwrap().get();
        assert!((q - (-4.5f64).exp()).abs() < 1e-14);
        assert_eq!(marcum_q1(5.0, 0.0).unwrap().get(), 1.0);
        assert!(marcum_q1(f64::NAN, 1.0).is_err());
        assert!(marcum_q1(1.0, f64::INFINITY).is_err());
        assert!(marcum_q1(-1.0, 1.0).is_err());
    }

    // Frozen with 40-digit quadrature of the Rician density (mpmath).
    #[test]
    fn marcum_frozen_values() {
        let cases = [
            (1.0, 1.0, 0.7328798037968202),
            (3.0, 5.0, 0.03067760208402174),
            (20.0, 18.0, 0.9786356624735629),
        ];
        for (a, b, want) in cases {
            let got = marcum_q1(a, b).unwrap();
            assert!((got.get() - want).abs() < 1e-12, "Q1({a},{b}) = {}", got.get());
            assert!((got.complement() - (1.0 - want)).abs() < 1e-12);
        }
    }

    #[test]
    fn marcum_monotone_on_grid() {
        let grid: Vec<f64> = (0..25).map(|i| i as f64 * 0.8).collect();
        for &a in &grid {
            let mut prev = f64::INFINITY;
            for &b in &grid {
                let q = marcum_q1(a, b).unwrap().get();
                assert!(q <= prev + 1e-15, "not nonincreasing in b at a={a} b={b}");
                prev = q;
            }
        }
        for &b in &grid {
            let mut prev = -1.0;
            for &a in &grid {
                let q = marcum_q1(a, b).unwrap().get();
                assert!(q >= prev - 1e-15, "not nondecreasing in a at a={a} b={b}");
                prev = q;
            }
        }
    }

    #[test]
    fn marcum_huge_arguments_do_not_overflow() {
        let q = marcum_q1(2000.0, 1990.0).unwrap();
        assert!(q.get() > 1.0 - 1e-12);
        let q = marcum_q1(1990.0, 2000.0).unwrap();
        assert!(q.get() < 1e-12);
        let q = marcum_q1(500.0, 500.0).unwrap();
        assert!((q.get() - 0.5).abs() < 0.02);
    }

    #[test]
    fn noncentral_cdf_reductions() {
        let zero = Noncentrality::new(0.0).unwrap();
        for x in [0.0, 0.3, 4.60517, 12.0] {
            assert_eq!(
                noncentral_chi2_2_cdf(x, zero).unwrap().get(),
                chi2_2_cdf(x).unwrap().get()
            );
        }
        assert!((noncentral_chi2_2_cdf(4.605170185988091, zero).unwrap().get() - 0.9).abs() < 1e-14);
        for rho in [0.5, 4.0, 30.0] {
            let r = Noncentrality::new(rho).unwrap();
            assert_eq!(noncentral_chi2_2_cdf(0.0, r).unwrap().get(), 0.0);
        }
        assert!(noncentral_chi2_2_cdf(-1.0, zero).is_err());
        assert!(Noncentrality::new(-0.1).is_err());
    }

    // Poisson mixture of central chi-squared CDFs, written out directly.
    fn poisson_mixture_cdf(x: f64, rho: f64) -> f64 {
        let half = rho / 2.0;
        let mut weight = (-half).exp();
        let mut total = 0.0;
        for j in 0..400 {
            if j > 0 {
                weight *= half / j as f64;
            }
            // P(chi2_{2+2j} <= x) = 1 - e^{-x/2} sum_{i<=j} (x/2)^i / i!
            let mut term = (-x / 2.0).exp();
            let mut tail = term;
            for i in 1..=j {
                term *= (x / 2.0) / i as f64;
                tail += term;
            }
            total += weight * (1.0 - tail);
        }
        total
    }

    #[test]
    fn noncentral_cdf_matches_poisson_mixture() {
        let want = poisson_mixture_cdf(4.0, 4.0);
        assert!((want - 0.3964990393880066).abs() < 1e-12);
        let got = noncentral_chi2_2_cdf(4.0, Noncentrality::new(4.0).unwrap())
            .unwrap()
            .get();
        assert!((got - want).abs() < 1e-12, "got {got} want {want}");
    }

    #[test]
    fn noncentral_cdf_nonincreasing_in_rho() {
        for x in [0.5, 2.0, 8.0, 20.0] {
            let mut prev = 2.0;
            for i in 0..60 {
                let rho = Noncentrality::new(i as f64 * 0.7).unwrap();
                let c = noncentral_chi2_2_cdf(x, rho).unwrap().get();
                assert!(c <= prev + 1e-15);
                prev = c;
            }
        }
    }

    #[test]
    fn bisect_simple_roots() {
        let r = bisect(|x| x - 2.0, 0.0, 10.0, 1e-12, 200).unwrap();
        assert!((r - 2.0).abs() < 1e-11);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12, 200).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-11);
    }

    #[test]
    fn bisect_expands_bracket() {
        let r = bisect(|x| 1000.0 - x, 0.0, 1.0, 1e-12, 400).unwrap();
        assert!((r - 1000.0).abs() < 1e-8);
    }

    #[test]
    fn bisect_accepts_infinite_lower_end() {
        let r = bisect(
            |x| if x == 0.0 { f64::INFINITY } else { 1.0 / x - 4.0 },
            0.0,
            1.0,
            1e-13,
            200,
        )
        .unwrap();
        assert!((r - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bisect_error_paths() {
        assert!(matches!(
            bisect(|_| 1.0, 0.0, 1.0, 1e-10, 200),
            Err(Error::Bracketing { .. })
        ));
        assert!(matches!(
            bisect(|x| x - 0.3, 0.0, 1.0, 1e-300, 5),
            Err(Error::Convergence { iterations: 5, .. })
        ));
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n)
            .map(|i| chi2_2_inv_cdf(p((i as f64 + 0.5) / n as f64)).unwrap())
            .collect();
        let d = ks_distance(&samples, |x| chi2_2_cdf(x).unwrap().get());
        assert!(d <= 0.5 / n as f64 + 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn bisect_finds_roots_of_monotone_cubics(root in -5.0f64..5.0, c in 0.1f64..3.0) {
            let f = |x: f64| c * (x - root) + (x - root).powi(3);
            let r = bisect(f, -10.0, 10.0, 1e-12, 300).unwrap();
            proptest::prop_assert!((r - root).abs() <= 1e-11 * root.abs().max(1.0) + 1e-11);
        }
    }

    #[test]
    fn illinois_finds_roots_fast() {
        let mut calls = 0;
        let b = illinois(
            |x| {
                calls += 1;
                x.powi(3) - 2.0
            },
            0.0,
            4.0,
            1e-14,
            200,
        )
        .unwrap();
        assert!((b.root - 2f64.cbrt()).abs() < 1e-13);
        assert!(calls < 40, "{calls}");
        assert!(illinois(|x| x + 1.0, 0.0, 1.0, 1e-12, 50).is_err());
    }
}
