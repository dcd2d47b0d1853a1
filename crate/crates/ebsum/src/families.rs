//! Parametric families of extended Bernoulli sums: closed-form and numeric
//! likelihood maximizers, power series distributions, Karamata–Stirling
//! profiles, and cross-modality scanners.

use num_bigint::BigUint;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::ebs_core::{add_bernoulli, pmf_dp, Pmf, Profile};
use crate::modal_analysis::{mode_of, peak_skewness};
use crate::{Error, Result, DEFAULT_EPS, DEFAULT_TIE_TOL};

pub type Rational = Ratio<i64>;

/// Closed integer interval, used for mode sets and integer maximizer sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntInterval {
    pub lo: i64,
    pub hi: i64,
}

impl IntInterval {
    pub fn point(v: i64) -> Self {
        IntInterval { lo: v, hi: v }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Mode interval of Binomial(n, p) by the exact threshold (n+1)p: twin
/// exactly when (n+1)p is an integer in 1..=n.
pub fn binomial_mode(n: u64, p: Rational) -> Result<IntInterval> {
    if p < Rational::zero() || p > Rational::one() {
        return Err(Error::InvalidArgument(format!("p = {p} outside [0,1]")));
    }
    if p.is_zero() {
        return Ok(IntInterval::point(0));
    }
    if p.is_one() {
        return Ok(IntInterval::point(n as i64));
    }
    let t = Rational::from_integer(n as i64 + 1) * p;
    if t.is_integer() {
        let k = t.to_integer();
        if k >= 1 && k <= n as i64 {
            return Ok(IntInterval { lo: k - 1, hi: k });
        }
    }
    Ok(IntInterval::point(t.floor().to_integer().min(n as i64)))
}

/// Mode interval of Binomial(n, p) for a floating p, ties declared within
/// the relative tolerance on the threshold (n+1)p.
pub fn binomial_mode_f64(n: u64, p: f64, tie_tol: f64) -> Result<IntInterval> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [0,1]")));
    }
    let t = (n as f64 + 1.0) * p;
    let k = t.round();
    if k >= 1.0 && k <= n as f64 && (t - k).abs() <= tie_tol * t.max(1.0) {
        return Ok(IntInterval {
            lo: k as i64 - 1,
            hi: k as i64,
        });
    }
    Ok(IntInterval::point((t.floor() as i64).min(n as i64)))
}

/// Likelihood maximizer interval in n for observed k under Binomial(·, p):
/// [k/p − 1, k/p] when k/p is a positive integer, else the point floor(k/p).
pub fn likelihood_max_n(k: u64, p: Rational) -> Result<IntInterval> {
    if p <= Rational::zero() || p >= Rational::one() {
        return Err(Error::InvalidArgument(format!("p = {p} outside (0,1)")));
    }
    if k == 0 {
        return Ok(IntInterval::point(0));
    }
    let t = Rational::from_integer(k as i64) / p;
    if t.is_integer() {
        let n = t.to_integer();
        Ok(IntInterval { lo: n - 1, hi: n })
    } else {
        Ok(IntInterval::point(t.floor().to_integer()))
    }
}

/// Likelihood maximizer in p for observed k under Binomial(n, ·): k/n.
pub fn likelihood_max_p(k: u64, n: u64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 0..={n}")));
    }
    Ok(k as f64 / n as f64)
}

/// Poisson bifurcation point t_k = k, which is also the likelihood maximizer
/// for observed k.
pub fn poisson_pivots(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("pivot needs k >= 1".into()));
    }
    Ok(k as f64)
}

/// Power series distribution f(k; t) = a_k t^k / F(t) for a positive
/// coefficient sequence with quotients a_{k+1}/a_k strictly decreasing to 0
/// (polynomial families end at `degree`). `ratio(k)` returns a_{k+1}/a_k,
/// which the engines use to keep weights in floating range.
pub struct PowerSeries {
    coeff: Box<dyn Fn(usize) -> f64 + Send + Sync>,
    ratio: Box<dyn Fn(usize) -> f64 + Send + Sync>,
    pub degree: Option<usize>,
}

/// Hard cap on materialized coefficients; exceeding it is an error.
const PSD_CAP: usize = 1_000_000;

impl PowerSeries {
    pub fn new(
        coeff: impl Fn(usize) -> f64 + Send + Sync + Clone + 'static,
        degree: Option<usize>,
    ) -> Self {
        let c = coeff.clone();
        PowerSeries {
            coeff: Box::new(coeff),
            ratio: Box::new(move |k| c(k + 1) / c(k)),
            degree,
        }
    }

    pub fn with_ratio(
        coeff: impl Fn(usize) -> f64 + Send + Sync + 'static,
        ratio: impl Fn(usize) -> f64 + Send + Sync + 'static,
        degree: Option<usize>,
    ) -> Self {
        PowerSeries {
            coeff: Box::new(coeff),
            ratio: Box::new(ratio),
            degree,
        }
    }

    /// a_k = 1/k!, F(t) = e^t.
    pub fn poisson() -> Self {
        Self::with_ratio(
            |k| 1.0 / factorial_f64(k),
            |k| 1.0 / (k as f64 + 1.0),
            None,
        )
    }

    /// a_k = 1/(2k)!, F(t) = cosh sqrt(t).
    pub fn cosh_sqrt() -> Self {
        Self::with_ratio(
            |k| 1.0 / factorial_f64(2 * k),
            |k| {
                let k = k as f64;
                1.0 / ((2.0 * k + 1.0) * (2.0 * k + 2.0))
            },
            None,
        )
    }

    /// a_k = C(n,k), F(t) = (1+t)^n; t = p/(1-p) recovers Binomial(n, p).
    pub fn binomial(n: u64) -> Self {
        Self::with_ratio(
            move |k| binomial_coeff_f64(n, k as u64),
            move |k| (n as f64 - k as f64) / (k as f64 + 1.0),
            Some(n as usize),
        )
    }

    pub fn coeff(&self, k: usize) -> f64 {
        (self.coeff)(k)
    }

    /// a_{k+1}/a_k (0 past the degree of a polynomial family).
    pub fn quotient(&self, k: usize) -> f64 {
        if let Some(d) = self.degree {
            if k >= d {
                return 0.0;
            }
        }
        (self.ratio)(k)
    }
}

fn factorial_f64(k: usize) -> f64 {
    (1..=k).fold(1.0f64, |acc, i| acc * i as f64)
}

fn binomial_coeff_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Relative weights w_k = a_k t^k / a_0 up to a positive rescaling, extended
/// until the geometric tail bound certifies omitted mass below `eps` times
/// the retained sum (both for mass and first moment). Returns (weights,
/// relative tail bound).
fn psd_weights(spec: &PowerSeries, t: f64, eps: f64) -> Result<(Vec<f64>, f64)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if spec.coeff(0) <= 0.0 {
        return Err(Error::InvalidArgument(
            "power series coefficients must be positive".into(),
        ));
    }
    if t == 0.0 {
        return Ok((vec![1.0], 0.0));
    }
    let mut w = vec![1.0f64];
    let mut sum = 1.0f64;
    let mut prev_q = f64::INFINITY;
    loop {
        let k = w.len() - 1;
        let quot = spec.quotient(k);
        if quot < 0.0 || !quot.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid coefficient quotient a_{}/a_{} = {quot}",
                k + 1,
                k
            )));
        }
        if quot > prev_q * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "coefficient quotients not decreasing at k = {k}"
            )));
        }
        prev_q = quot;
        if quot == 0.0 {
            // polynomial family exhausted
            return Ok((w, 0.0));
        }
        let q = quot * t;
        let next = w[k] * q;
        if q < 0.5 {
            // remaining ratios only shrink, so the tail is geometric with
            // ratio q; the first-moment tail gets the standard extra factor
            let tail_mass = next / (1.0 - q);
            let tail_moment = next * ((k + 1) as f64 / (1.0 - q) + q / ((1.0 - q) * (1.0 - q)));
            if tail_mass <= eps * sum && tail_moment <= eps * sum * (k.max(1) as f64) {
                return Ok((w, tail_mass / sum));
            }
        }
        w.push(next);
        sum += next;
        if w.len() > PSD_CAP {
            return Err(Error::Budget(format!(
                "power series needed more than {PSD_CAP} coefficients at t = {t}"
            )));
        }
        if sum > 1e280 {
            let scale = 1e-280;
            for v in &mut w {
                *v *= scale;
            }
            sum *= scale;
        }
    }
}

/// PMF of the power series distribution at parameter t.
pub fn psd_pmf(spec: &PowerSeries, t: f64, eps: f64) -> Result<Pmf> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let (w, tail) = psd_weights(spec, t, eps / 2.0)?;
    let sum: f64 = w.iter().sum::<f64>() * (1.0 + tail);
    Ok(Pmf {
        shift: 0,
        mass: w.iter().map(|&v| v / sum).collect(),
        trunc_err: tail,
    })
}

/// Mean mu(t) = t F'(t)/F(t), strictly increasing in t from mu(0) = 0.
pub fn psd_mean(spec: &PowerSeries, t: f64) -> Result<f64> {
    let (w, _) = psd_weights(spec, t, 1e-14)?;
    let sum: f64 = w.iter().sum();
    let first: f64 = w.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
    Ok(first / sum)
}

/// Bifurcation point t_k = a_{k-1}/a_k, the unique solution of
/// f(k-1; t) = f(k; t).
pub fn psd_bifurcation(spec: &PowerSeries, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("bifurcation needs k >= 1".into()));
    }
    if let Some(d) = spec.degree {
        if k > d {
            return Err(Error::InvalidArgument(format!(
                "k = {k} beyond polynomial degree {d}"
            )));
        }
    }
    let t = 1.0 / spec.quotient(k - 1);
    let pmf = psd_pmf(spec, t, DEFAULT_EPS)?;
    let (a, b) = (pmf.mass[k - 1], pmf.mass[k]);
    if (a - b).abs() > 1e-10 * a.max(b) {
        return Err(Error::Internal(format!(
            "balance f({}; t_{k}) = f({k}; t_{k}) violated: {a} vs {b}",
            k - 1
        )));
    }
    Ok(t)
}

/// Likelihood maximizer ell(k): the unique root of mu(t) = k, found by
/// bisection; infinity for a polynomial family at k = degree.
pub fn psd_likelihood_max(spec: &PowerSeries, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    if let Some(d) = spec.degree {
        if k > d {
            return Err(Error::InvalidArgument(format!(
                "k = {k} beyond polynomial degree {d}"
            )));
        }
        if k == d {
            return Ok(f64::INFINITY);
        }
    }
    let target = k as f64;
    let mut hi = 1.0f64;
    while psd_mean(spec, hi)? < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Budget(format!(
                "could not bracket mu(t) = {k} below t = 1e12"
            )));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psd_mean(spec, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row of a cross-modality report: maximizer interval for k and the mode
/// interval at the maximizer(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalEntry {
    pub k: i64,
    pub ell_lo: f64,
    pub ell_hi: f64,
    pub m_lo: i64,
    pub m_hi: i64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalReport {
    pub entries: Vec<CrossModalEntry>,
    pub all_pass: bool,
}

impl CrossModalReport {
    pub fn from_entries(entries: Vec<CrossModalEntry>) -> Self {
        let all_pass = entries.iter().all(|e| e.pass);
        CrossModalReport { entries, all_pass }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,ell_lo,ell_hi,m_lo,m_hi,pass\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{},{},{}\n",
                e.k, e.ell_lo, e.ell_hi, e.m_lo, e.m_hi, e.pass
            ));
        }
        out
    }
}

/// Outcome of the three equivalent cross-modality conditions for a power
/// series family: maximizer interlacing t_k <= ell(k) <= t_{k+1}, mean window
/// k-1 <= mu(t_k) <= k, and the global gap sup |mu - m_+| <= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdCrossModal {
    pub report: CrossModalReport,
    pub cond_interlace: bool,
    pub cond_mean_window: bool,
    pub cond_sup_gap: bool,
}

/// Checks the three equivalent cross-modality conditions for k = 1..=k_max.
pub fn psd_cross_modal_check(spec: &PowerSeries, k_max: usize) -> Result<PsdCrossModal> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    let tol = 1e-9;
    let mut entries = Vec::with_capacity(k_max);
    let mut cond_interlace = true;
    let mut cond_mean_window = true;
    let mut t_top = 0.0f64;
    for k in 1..=k_max {
        let t_k = psd_bifurcation(spec, k)?;
        let t_next = match spec.degree {
            Some(d) if k >= d => f64::INFINITY,
            _ => psd_bifurcation(spec, k + 1)?,
        };
        t_top = t_top.max(if t_next.is_finite() { t_next } else { t_k * 2.0 });
        let ell = psd_likelihood_max(spec, k)?;
        let interlace = t_k * (1.0 - tol) <= ell && ell <= t_next * (1.0 + tol);
        let mu_tk = psd_mean(spec, t_k)?;
        let window = (k as f64 - 1.0) - tol <= mu_tk && mu_tk <= k as f64 + tol;
        cond_interlace &= interlace;
        cond_mean_window &= window;
        let (m_lo, m_hi, hit) = if ell.is_finite() {
            let pmf = psd_pmf(spec, ell, DEFAULT_EPS)?;
            let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
            (m.m_minus, m.m_plus, m.m_minus <= k as i64 && k as i64 <= m.m_plus)
        } else {
            // polynomial family, likelihood increases all the way to the
            // degenerate endpoint where the mode is the degree itself
            (k as i64, k as i64, true)
        };
        entries.push(CrossModalEntry {
            k: k as i64,
            ell_lo: ell,
            ell_hi: ell,
            m_lo,
            m_hi,
            pass: interlace && window && hit,
        });
    }
    // condition (iii) on a grid through all scanned bifurcation intervals
    let mut cond_sup_gap = true;
    let steps = 40 * k_max;
    for i in 1..=steps {
        let t = t_top * i as f64 / steps as f64;
        let mu = psd_mean(spec, t)?;
        let pmf = psd_pmf(spec, t, DEFAULT_EPS)?;
        let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
        if (mu - m.m_plus as f64).abs() > 1.0 + 1e-6 {
            cond_sup_gap = false;
        }
    }
    Ok(PsdCrossModal {
        report: CrossModalReport::from_entries(entries),
        cond_interlace,
        cond_mean_window,
        cond_sup_gap,
    })
}

/// Profile scaling along the ray of odds: lambda(t) = lambda t and
/// p_i(t) = t p_i / (1 - p_i + t p_i), i.e. every odds r_i becomes t r_i.
pub fn ebs_scale(base: &Profile, t: f64) -> Result<Profile> {
    base.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if base.probs.iter().any(|&p| p == 1.0) {
        return Err(Error::InvalidArgument(
            "scaling requires max p_i < 1".into(),
        ));
    }
    if t == 1.0 {
        return Ok(base.clone());
    }
    let probs = base
        .probs
        .iter()
        .map(|&p| t * p / (1.0 - p + t * p))
        .collect();
    // scaled success probabilities satisfy p_i(t) <= max(1, t) p_i
    Profile::new(base.lambda * t, probs, base.tail_mass * t.max(1.0))
}

/// Karamata–Stirling profile: lambda = 0, p_i = t/(t+i-1) for i = 1..=n
/// (p_1 = 1 always, handled as a shift by the engines).
pub fn karamata_stirling_profile(t: f64, n: u64) -> Result<Profile> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be > 0")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let probs = (1..=n).map(|i| t / (t + (i - 1) as f64)).collect();
    Profile::finitary(0.0, probs)
}

/// Karamata–Stirling PMF by exact integer arithmetic: for t = a/b the weight
/// of k is the z^k coefficient of prod_{i=1}^n (a z + b(i-1)), a scaled
/// unsigned Stirling triangle. Returns P[S = k] for k = 0..=n.
pub fn karamata_stirling_pmf_exact(t_num: u64, t_den: u64, n: u64) -> Result<Vec<f64>> {
    if t_num == 0 || t_den == 0 {
        return Err(Error::InvalidArgument("t must be a positive rational".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let a = BigUint::from(t_num);
    let b = BigUint::from(t_den);
    let mut coeffs: Vec<BigUint> = vec![BigUint::one()];
    for i in 1..=n {
        let c = &b * BigUint::from(i - 1);
        let mut next = vec![BigUint::zero(); coeffs.len() + 1];
        for (k, v) in coeffs.iter().enumerate() {
            next[k] += v * &c;
            next[k + 1] += v * &a;
        }
        coeffs = next;
    }
    let total: BigUint = coeffs.iter().sum();
    let total = BigRational::from_integer(total.into());
    Ok(coeffs
        .into_iter()
        .map(|c| (BigRational::from_integer(c.into()) / &total).to_f64().unwrap_or(0.0))
        .collect())
}

/// Mean of the Karamata–Stirling distribution, the shifted harmonic sum.
pub fn ks_mean(n: u64, t: f64) -> f64 {
    (1..=n).map(|i| t / (t + (i - 1) as f64)).sum()
}

/// Digamma function, by recurrence into the asymptotic regime.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma needs x > 0");
    let mut acc = 0.0;
    let mut x = x;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Asymptotic mode location u(n,t) = t (log n - digamma(t)) for the
/// Karamata–Stirling distribution; the leading term of the mean
/// t (digamma(n+t) - digamma(t)).
pub fn ks_asymptotic_mode(n: u64, t: f64) -> f64 {
    t * ((n as f64).ln() - digamma(t))
}

/// Coefficient kind for a serializable power-series family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PowerSeriesKind {
    Poisson,
    CoshSqrt,
    Binomial { n: u64 },
}

impl PowerSeriesKind {
    pub fn build(&self) -> PowerSeries {
        match self {
            PowerSeriesKind::Poisson => PowerSeries::poisson(),
            PowerSeriesKind::CoshSqrt => PowerSeries::cosh_sqrt(),
            PowerSeriesKind::Binomial { n } => PowerSeries::binomial(*n),
        }
    }
}

/// Serializable family descriptor for the scanners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// Binomial(n, p) with n varying, p = p_num/p_den fixed.
    BinomialN { p_num: i64, p_den: i64 },
    /// Binomial(n, p) with p varying, n fixed.
    BinomialP { n: u64 },
    /// Poisson(t) with t varying.
    Poisson,
    /// Power series distribution in t.
    PowerSeries { kind: PowerSeriesKind },
    /// Odds-scaled copies of a base profile.
    ScaledEbs { base: Profile },
    /// Karamata–Stirling with n varying up to n_max, t fixed.
    KaramataStirling { t: f64, n_max: u64 },
}

/// Exact binomial weight w(n,k) = C(n,k) a^k (b-a)^{n-k}, so that
/// f(k; n, a/b) = w(n,k)/b^n; comparisons across n use powers of b.
fn binomial_weight(n: u64, k: u64, a: &BigUint, ba: &BigUint) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c * a.pow(k as u32) * ba.pow((n - k) as u32)
}

/// Verifies the exact relation pattern around the binomial cross mode (k, n):
/// horizontally in k at fixed n, vertically in n at fixed k, with equalities
/// exactly when k/p is a positive integer.
fn binomial_pattern_ok(k: u64, p: Rational) -> Result<bool> {
    let a = BigUint::from(*p.numer() as u64);
    let b_int = *p.denom() as u64;
    let b = BigUint::from(b_int);
    let ba = &b - &a;
    let ell = likelihood_max_n(k, p)?;
    let integer_case = ell.lo != ell.hi;
    let n = ell.hi as u64; // in the integer case the pattern sits at ell_-
    let n = if integer_case { ell.lo as u64 } else { n };
    let w = |nn: u64, kk: i64| -> BigUint {
        if kk < 0 {
            BigUint::zero()
        } else {
            binomial_weight(nn, kk as u64, &a, &ba)
        }
    };
    let center = w(n, k as i64);
    // horizontal: f(k-1;n) vs f(k;n) > f(k+1;n)
    let left_ok = if integer_case {
        w(n, k as i64 - 1) == center
    } else {
        w(n, k as i64 - 1) < center
    };
    let right_ok = w(n, k as i64 + 1) < center;
    // vertical: f(k;n-1) < f(k;n) and f(k;n+1) vs f(k;n), cross-denominator
    // comparison via b-scaling
    let below_ok = if n == 0 {
        true
    } else {
        &w(n - 1, k as i64) * &b < center
    };
    let above = w(n + 1, k as i64);
    let above_ok = if integer_case {
        above == &center * &b
    } else {
        above < &center * &b
    };
    Ok(left_ok && right_ok && below_ok && above_ok)
}

/// Incremental Karamata–Stirling PMFs: calls `visit(n, pmf)` for n = 1..=n_max
/// building each convolution from the previous one.
fn ks_scan(t: f64, n_max: u64, mut visit: impl FnMut(u64, &Pmf) -> Result<()>) -> Result<()> {
    let mut pmf = Pmf {
        shift: 1,
        mass: vec![1.0],
        trunc_err: 0.0,
    };
    visit(1, &pmf)?;
    for i in 2..=n_max {
        pmf = add_bernoulli(&pmf, t / (t + (i - 1) as f64))?;
        visit(i, &pmf)?;
    }
    Ok(())
}

/// Cross-modality scan: for each k in k_lo..=k_hi computes the likelihood
/// maximizer(s) of f(k; ·) in the family parameter and checks that k is a
/// mode there.
pub fn cross_modality_scan(family: &FamilySpec, k_lo: u64, k_hi: u64) -> Result<CrossModalReport> {
    if k_hi < k_lo {
        return Err(Error::InvalidArgument(format!(
            "empty range {k_lo}..={k_hi}"
        )));
    }
    let mut entries = Vec::new();
    match family {
        FamilySpec::BinomialN { p_num, p_den } => {
            let p = Rational::new(*p_num, *p_den);
            for k in k_lo..=k_hi {
                let ell = likelihood_max_n(k, p)?;
                let mut pass = true;
                let mut m_lo = i64::MAX;
                let mut m_hi = i64::MIN;
                for n in ell.lo..=ell.hi {
                    let m = binomial_mode(n as u64, p)?;
                    m_lo = m_lo.min(m.lo);
                    m_hi = m_hi.max(m.hi);
                    pass &= m.contains(k as i64);
                }
                if k >= 1 {
                    pass &= binomial_pattern_ok(k, p)?;
                }
                entries.push(CrossModalEntry {
                    k: k as i64,
                    ell_lo: ell.lo as f64,
                    ell_hi: ell.hi as f64,
                    m_lo,
                    m_hi,
                    pass,
                });
            }
        }
        FamilySpec::BinomialP { n } => {
            for k in k_lo..=k_hi.min(*n) {
                let ell = Rational::new(k as i64, *n as i64);
                let m = binomial_mode(*n, ell)?;
                entries.push(CrossModalEntry {
                    k: k as i64,
                    ell_lo: k as f64 / *n as f64,
                    ell_hi: k as f64 / *n as f64,
                    m_lo: m.lo,
                    m_hi: m.hi,
                    pass: m.contains(k as i64),
                });
            }
        }
        FamilySpec::Poisson => {
            for k in k_lo..=k_hi {
                // ell(k) = k is the bifurcation point: mode {k-1, k}
                let (m_lo, m_hi) = if k == 0 { (0, 0) } else { (k as i64 - 1, k as i64) };
                entries.push(CrossModalEntry {
                    k: k as i64,
                    ell_lo: k as f64,
                    ell_hi: k as f64,
                    m_lo,
                    m_hi,
                    pass: true,
                });
            }
        }
        FamilySpec::PowerSeries { kind } => {
            let spec = kind.build();
            let checked = psd_cross_modal_check(&spec, k_hi.max(1) as usize)?;
            entries = checked
                .report
                .entries
                .into_iter()
                .filter(|e| e.k >= k_lo as i64 && e.k <= k_hi as i64)
                .collect();
        }
        FamilySpec::ScaledEbs { base } => {
            base.validate()?;
            let support: u64 = base.probs.iter().filter(|&&p| p > 0.0).count() as u64;
            let unbounded = base.lambda > 0.0;
            if !unbounded && k_hi > support {
                return Err(Error::InvalidArgument(format!(
                    "k = {k_hi} beyond the support bound {support} of the scaled family"
                )));
            }
            for k in k_lo..=k_hi {
                if k == 0 {
                    entries.push(CrossModalEntry {
                        k: 0,
                        ell_lo: 0.0,
                        ell_hi: 0.0,
                        m_lo: 0,
                        m_hi: 0,
                        pass: true,
                    });
                    continue;
                }
                if !unbounded && k == support {
                    // mean tends to the support bound only in the limit
                    let pmf = pmf_dp(&ebs_scale(base, 1e8)?, DEFAULT_EPS)?;
                    let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
                    entries.push(CrossModalEntry {
                        k: k as i64,
                        ell_lo: f64::INFINITY,
                        ell_hi: f64::INFINITY,
                        m_lo: m.m_minus,
                        m_hi: m.m_plus,
                        pass: m.m_minus <= k as i64 && k as i64 <= m.m_plus,
                    });
                    continue;
                }
                // bisection on the strictly increasing scaled mean
                let target = k as f64;
                let mut hi = 1.0f64;
                while ebs_scale(base, hi)?.mean() < target {
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Err(Error::Budget(format!(
                            "could not bracket scaled mean = {k}"
                        )));
                    }
                }
                let mut lo = 0.0f64;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if ebs_scale(base, mid)?.mean() < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-13 * hi {
                        break;
                    }
                }
                let ell = 0.5 * (lo + hi);
                let pmf = pmf_dp(&ebs_scale(base, ell)?, DEFAULT_EPS)?;
                let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
                entries.push(CrossModalEntry {
                    k: k as i64,
                    ell_lo: ell,
                    ell_hi: ell,
                    m_lo: m.m_minus,
                    m_hi: m.m_plus,
                    pass: m.m_minus <= k as i64 && k as i64 <= m.m_plus,
                });
            }
        }
        FamilySpec::KaramataStirling { t, n_max } => {
            let k_hi_eff = k_hi.min(*n_max);
            let mut best: Vec<(f64, u64, u64)> = vec![(0.0, 0, 0); (k_hi_eff + 1) as usize];
            ks_scan(*t, *n_max, |n, pmf| {
                for k in k_lo..=k_hi_eff {
                    let v = pmf.prob(k as i64);
                    let slot = &mut best[k as usize];
                    if v > slot.0 * (1.0 + 1e-12) {
                        *slot = (v, n, n);
                    } else if v >= slot.0 * (1.0 - 1e-12) && slot.1 > 0 {
                        slot.2 = n;
                    }
                }
                Ok(())
            })?;
            for k in k_lo..=k_hi_eff {
                let (_, n_lo, n_hi) = best[k as usize];
                if n_lo == 0 {
                    continue;
                }
                let mut pass = true;
                let mut m_lo = i64::MAX;
                let mut m_hi = i64::MIN;
                for n in n_lo..=n_hi {
                    let pmf = pmf_dp(&karamata_stirling_profile(*t, n)?, DEFAULT_EPS)?;
                    let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
                    m_lo = m_lo.min(m.m_minus);
                    m_hi = m_hi.max(m.m_plus);
                    pass &= m.m_minus <= k as i64 && k as i64 <= m.m_plus;
                }
                entries.push(CrossModalEntry {
                    k: k as i64,
                    ell_lo: n_lo as f64,
                    ell_hi: n_hi as f64,
                    m_lo,
                    m_hi,
                    pass,
                });
            }
        }
    }
    Ok(CrossModalReport::from_entries(entries))
}

/// One step between consecutive profiles of a directed chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DirectedStep {
    RaiseProb,
    AppendProb,
    PoissonIncrement { legal: bool },
}

fn classify_step(prev: &Profile, next: &Profile) -> Result<DirectedStep> {
    let same_lambda = (prev.lambda - next.lambda).abs() <= 1e-15 * prev.lambda.max(1.0);
    let mut prev_sorted = prev.probs.clone();
    let mut next_sorted = next.probs.clone();
    prev_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    next_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if same_lambda && next.probs.len() == prev.probs.len() + 1 {
        // append: previous probabilities must survive as a sub-multiset
        let mut j = 0;
        let mut extra = 0;
        for &q in &next_sorted {
            if j < prev_sorted.len() && (q - prev_sorted[j]).abs() <= 1e-15 {
                j += 1;
            } else {
                extra += 1;
            }
        }
        if j == prev_sorted.len() && extra == 1 {
            return Ok(DirectedStep::AppendProb);
        }
    }
    if same_lambda && next.probs.len() == prev.probs.len() {
        let mut raised = 0;
        let mut ok = true;
        for (a, b) in prev_sorted.iter().zip(&next_sorted) {
            if (a - b).abs() <= 1e-15 {
                continue;
            } else if b > a {
                raised += 1;
            } else {
                ok = false;
            }
        }
        if ok && raised == 1 {
            return Ok(DirectedStep::RaiseProb);
        }
    }
    if next.lambda > prev.lambda && prev_sorted == next_sorted {
        let pmf = pmf_dp(prev, DEFAULT_EPS)?;
        let gamma = peak_skewness(&pmf)?;
        let legal = next.lambda - prev.lambda <= gamma + 1e-12;
        return Ok(DirectedStep::PoissonIncrement { legal });
    }
    Err(Error::InvalidArgument(
        "step is not a probability raise, an append, or a Poisson increment".into(),
    ))
}

/// Checks that a chain of profiles is directed: every step is one of the
/// three legal operations (Poisson increments capped by the predecessor's
/// peak skewness) and, over the modes the chain attains, the likelihood
/// maximum along the chain sits at a profile where that mode is attained.
pub fn directed_sequence_check(seq: &[Profile]) -> Result<bool> {
    if seq.len() < 2 {
        return Err(Error::InvalidArgument("chain needs at least two profiles".into()));
    }
    for w in seq.windows(2) {
        match classify_step(&w[0], &w[1])? {
            DirectedStep::PoissonIncrement { legal: false } => return Ok(false),
            _ => {}
        }
    }
    // cross-modality over attained modes
    let pmfs: Vec<Pmf> = seq
        .iter()
        .map(|p| pmf_dp(p, DEFAULT_EPS))
        .collect::<Result<_>>()?;
    let modes: Vec<_> = pmfs
        .iter()
        .map(|pmf| mode_of(pmf, DEFAULT_TIE_TOL))
        .collect::<Result<Vec<_>>>()?;
    let mut attained: Vec<i64> = modes.iter().flat_map(|m| [m.m_minus, m.m_plus]).collect();
    attained.sort_unstable();
    attained.dedup();
    for &k in &attained {
        let mut best = 0usize;
        for (j, pmf) in pmfs.iter().enumerate() {
            if pmf.prob(k) > pmfs[best].prob(k) {
                best = j;
            }
        }
        let m = &modes[best];
        if !(m.m_minus <= k && k <= m.m_plus) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_mode_examples() {
        let third = Rational::new(1, 3);
        assert_eq!(
            binomial_mode(8, third).unwrap(),
            IntInterval { lo: 2, hi: 3 }
        );
        assert_eq!(binomial_mode(7, Rational::zero()).unwrap(), IntInterval::point(0));
        assert_eq!(binomial_mode(7, Rational::one()).unwrap(), IntInterval::point(7));
        // (12+1)*0.385 = 5.005
        assert_eq!(
            binomial_mode_f64(12, 0.385, 1e-9).unwrap(),
            IntInterval::point(5)
        );
        assert_eq!(
            binomial_mode(12, Rational::new(385, 1000)).unwrap(),
            IntInterval::point(5)
        );
    }

    #[test]
    fn likelihood_max_n_examples() {
        let third = Rational::new(1, 3);
        assert_eq!(
            likelihood_max_n(2, third).unwrap(),
            IntInterval { lo: 5, hi: 6 }
        );
        assert_eq!(likelihood_max_n(0, third).unwrap(), IntInterval::point(0));
        // 3 / 0.4 = 7.5
        assert_eq!(
            likelihood_max_n(3, Rational::new(2, 5)).unwrap(),
            IntInterval::point(7)
        );
    }

    #[test]
    fn likelihood_max_n_matches_argmax_scan() {
        let p = Rational::new(2, 5);
        let pf = 0.4f64;
        for k in 1..=6u64 {
            let ell = likelihood_max_n(k, p).unwrap();
            let mut best = (0u64, 0.0f64);
            for n in 0..=40u64 {
                let profile = Profile::finitary(0.0, vec![pf; n as usize]).unwrap();
                let v = pmf_dp(&profile, DEFAULT_EPS).unwrap().prob(k as i64);
                if v > best.1 {
                    best = (n, v);
                }
            }
            assert!(ell.contains(best.0 as i64), "k={k}: scan={}, ell={ell:?}", best.0);
        }
    }

    #[test]
    fn likelihood_max_p_examples() {
        assert_eq!(likelihood_max_p(0, 5).unwrap(), 0.0);
        assert_eq!(likelihood_max_p(5, 5).unwrap(), 1.0);
        let ell = likelihood_max_p(2, 5).unwrap();
        assert_eq!(ell, 0.4);
        assert!(binomial_mode(5, Rational::new(2, 5)).unwrap().contains(2));
        // grid-scan oracle for (3, 7)
        let mut best = (0.0f64, 0.0f64);
        let profile = |p: f64| Profile::finitary(0.0, vec![p; 7]).unwrap();
        let mut p = 0.0;
        while p <= 1.0 {
            let v = pmf_dp(&profile(p), DEFAULT_EPS).unwrap().prob(3);
            if v > best.1 {
                best = (p, v);
            }
            p += 1e-4;
        }
        assert!((best.0 - 3.0 / 7.0).abs() < 1e-4);
    }

    #[test]
    fn p_interlacing() {
        // p_k = k/(n+1) < ell(k) = k/n < p_{k+1}
        for n in 1..=12u64 {
            for k in 1..=n {
                let pk = k as f64 / (n as f64 + 1.0);
                let ell = likelihood_max_p(k, n).unwrap();
                let pk1 = (k as f64 + 1.0) / (n as f64 + 1.0);
                assert!(pk < ell && ell < pk1 + 1e-15, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn poisson_pivot_examples() {
        assert_eq!(poisson_pivots(1).unwrap(), 1.0);
        let pmf = pmf_dp(&Profile::finitary(1.0, vec![]).unwrap(), DEFAULT_EPS).unwrap();
        assert!((pmf.mass[0] - pmf.mass[1]).abs() < 1e-15);
        // grid argmax of f(4;t) lands near 4
        let mut best = (0.0f64, 0.0f64);
        let mut t = 0.05;
        while t <= 10.0 {
            let v = pmf_dp(&Profile::finitary(t, vec![]).unwrap(), DEFAULT_EPS)
                .unwrap()
                .prob(4);
            if v > best.1 {
                best = (t, v);
            }
            t += 1e-3;
        }
        assert!((best.0 - 4.0).abs() < 1e-3 + 1e-9);
        // f(2; 1.6) > f(2; 2.5)
        let f = |t: f64| pmf_dp(&Profile::finitary(t, vec![]).unwrap(), DEFAULT_EPS).unwrap().prob(2);
        assert!(f(1.6) > f(2.5));
    }

    #[test]
    fn binomial_coefficient_triple_identity() {
        // C(cb-1, ca-1) b(b-a) = C(cb-1, ca) ab = C(cb, ca) a(b-a)
        fn choose(n: u64, k: u64) -> u128 {
            let mut acc: u128 = 1;
            for i in 0..k {
                acc = acc * (n - i) as u128 / (i + 1) as u128;
            }
            acc
        }
        for b in 2..=20u64 {
            for a in 1..b {
                if num_integer_gcd(a, b) != 1 {
                    continue;
                }
                for c in 1..=5u64 {
                    let lhs = choose(c * b - 1, c * a - 1) * (b as u128) * ((b - a) as u128);
                    let mid = choose(c * b - 1, c * a) * (a as u128) * (b as u128);
                    let rhs = choose(c * b, c * a) * (a as u128) * ((b - a) as u128);
                    assert_eq!(lhs, mid, "a={a} b={b} c={c}");
                    assert_eq!(mid, rhs, "a={a} b={b} c={c}");
                }
            }
        }
    }

    fn num_integer_gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }

    #[test]
    fn psd_poisson_matches() {
        let spec = PowerSeries::poisson();
        let pmf = psd_pmf(&spec, 2.0, 1e-12).unwrap();
        let direct = pmf_dp(&Profile::finitary(2.0, vec![]).unwrap(), DEFAULT_EPS).unwrap();
        for k in 0..15 {
            assert!(
                (pmf.prob(k) - direct.prob(k)).abs() < 1e-12,
                "k={k}: {} vs {}",
                pmf.prob(k),
                direct.prob(k)
            );
        }
        assert!((psd_mean(&spec, 3.0).unwrap() - 3.0).abs() < 1e-11);
        assert_eq!(psd_mean(&spec, 0.0).unwrap(), 0.0);
        assert!((psd_bifurcation(&spec, 4).unwrap() - 4.0).abs() < 1e-12);
        assert!((psd_likelihood_max(&spec, 4).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(psd_likelihood_max(&spec, 0).unwrap(), 0.0);
    }

    #[test]
    fn psd_binomial_matches() {
        let spec = PowerSeries::binomial(6);
        // t = p/(1-p) with p = 0.3
        let t = 0.3 / 0.7;
        let pmf = psd_pmf(&spec, t, 1e-12).unwrap();
        let direct = pmf_dp(&Profile::finitary(0.0, vec![0.3; 6]).unwrap(), DEFAULT_EPS).unwrap();
        for k in 0..=6 {
            assert!((pmf.prob(k) - direct.prob(k)).abs() < 1e-13);
        }
        // polynomial sentinel at the degree
        assert_eq!(psd_likelihood_max(&spec, 6).unwrap(), f64::INFINITY);
        // bifurcation ratio a_{k-1}/a_k = k/(n-k+1)
        assert!((psd_bifurcation(&spec, 2).unwrap() - 2.0 / 5.0).abs() < 1e-14);
    }

    #[test]
    fn psd_cosh_pivots() {
        let spec = PowerSeries::cosh_sqrt();
        assert!((psd_bifurcation(&spec, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!((psd_bifurcation(&spec, 2).unwrap() - 12.0).abs() < 1e-12);
        let mu1 = psd_mean(&spec, 2.0).unwrap();
        assert!(0.0 < mu1 && mu1 < 1.0, "{mu1}");
        // frozen: mu(t) = sqrt(t) tanh(sqrt(t)) / 2
        let expect = |t: f64| t.sqrt() * t.sqrt().tanh() / 2.0;
        assert!((mu1 - expect(2.0)).abs() < 1e-11, "{mu1}");
        assert!((psd_mean(&spec, 12.0).unwrap() - expect(12.0)).abs() < 1e-10);
        let ell1 = psd_likelihood_max(&spec, 1).unwrap();
        assert!(2.0 < ell1 && ell1 < 12.0, "{ell1}");
        assert!((expect(ell1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn psd_stochastic_monotonicity() {
        let spec = PowerSeries::cosh_sqrt();
        let grid = [0.5, 1.0, 2.0, 5.0, 9.0, 14.0];
        for w in grid.windows(2) {
            let lo = psd_pmf(&spec, w[0], 1e-12).unwrap();
            let hi = psd_pmf(&spec, w[1], 1e-12).unwrap();
            for k in 0..lo.len().max(hi.len()) {
                let tail_lo: f64 = (k + 1..lo.len()).map(|j| lo.mass[j]).sum();
                let tail_hi: f64 = (k + 1..hi.len()).map(|j| hi.mass[j]).sum();
                assert!(tail_hi >= tail_lo - 1e-12, "t={} k={k}", w[1]);
            }
        }
    }

    #[test]
    fn psd_cross_modal_poisson_and_cosh() {
        let out = psd_cross_modal_check(&PowerSeries::poisson(), 6).unwrap();
        assert!(out.cond_interlace && out.cond_mean_window && out.cond_sup_gap);
        assert!(out.report.all_pass);
        // mu(t_k) = k exactly for Poisson
        for k in 1..=6 {
            let mu = psd_mean(&PowerSeries::poisson(), k as f64).unwrap();
            assert!((mu - k as f64).abs() < 1e-10);
        }
        let out = psd_cross_modal_check(&PowerSeries::cosh_sqrt(), 5).unwrap();
        assert!(out.cond_interlace && out.cond_mean_window && out.cond_sup_gap);
        assert!(out.report.all_pass);
    }

    #[test]
    fn psd_adversarial_fails_unanimously() {
        // ultra-logconcave coefficients a_k = a_{k-1}/(k b_k) with an
        // increasing b-sequence whose first entries are tiny: breaks the
        // mean window at k = 3
        let b = [1e-3, 2e-3, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0];
        let bf = move |j: usize| {
            if j < b.len() {
                b[j]
            } else {
                b[b.len() - 1] + 0.1 * (j - b.len() + 1) as f64
            }
        };
        let coeff = move |k: usize| {
            let mut a = 1.0f64;
            for j in 1..=k {
                a /= j as f64 * bf(j - 1);
            }
            a
        };
        let spec = PowerSeries::with_ratio(
            coeff,
            move |k| 1.0 / ((k as f64 + 1.0) * bf(k)),
            None,
        );
        let out = psd_cross_modal_check(&spec, 4).unwrap();
        assert!(!out.report.all_pass);
        // the three conditions agree on failure
        assert!(!out.cond_interlace);
        assert!(!out.cond_mean_window);
        assert!(!out.cond_sup_gap);
    }

    #[test]
    fn ebs_scale_examples() {
        let base = Profile::finitary(0.0, vec![0.5]).unwrap();
        let zero = ebs_scale(&base, 0.0).unwrap();
        assert_eq!(zero.lambda, 0.0);
        assert_eq!(zero.probs, vec![0.0]);
        assert_eq!(ebs_scale(&base, 1.0).unwrap(), base);
        let tripled = ebs_scale(&base, 3.0).unwrap();
        assert!((tripled.probs[0] - 0.75).abs() < 1e-15);
        assert!(ebs_scale(&Profile::finitary(0.0, vec![1.0]).unwrap(), 2.0).is_err());
        // t = 1 is bit-exact through the engine
        let base = Profile::finitary(0.7, vec![0.31, 0.62]).unwrap();
        let a = pmf_dp(&base, DEFAULT_EPS).unwrap();
        let b = pmf_dp(&ebs_scale(&base, 1.0).unwrap(), DEFAULT_EPS).unwrap();
        assert_eq!(a.mass, b.mass);
    }

    #[test]
    fn karamata_stirling_small() {
        let profile = karamata_stirling_profile(1.0, 3).unwrap();
        assert_eq!(profile.probs.len(), 3);
        assert!((profile.probs[0] - 1.0).abs() < 1e-15);
        assert!((profile.probs[1] - 0.5).abs() < 1e-15);
        assert!((profile.probs[2] - 1.0 / 3.0).abs() < 1e-15);
        let pmf = pmf_dp(&profile, DEFAULT_EPS).unwrap();
        // unsigned first-kind Stirling numbers (2,3,1)/6 on k = 1..3
        assert!((pmf.prob(1) - 2.0 / 6.0).abs() < 1e-15);
        assert!((pmf.prob(2) - 3.0 / 6.0).abs() < 1e-15);
        assert!((pmf.prob(3) - 1.0 / 6.0).abs() < 1e-15);
        let exact = karamata_stirling_pmf_exact(1, 1, 3).unwrap();
        assert_eq!(exact.len(), 4);
        for k in 0..=3 {
            assert!((exact[k] - pmf.prob(k as i64)).abs() < 1e-15);
        }
        // n = 1: point mass at 1
        let one = pmf_dp(&karamata_stirling_profile(1.0, 1).unwrap(), DEFAULT_EPS).unwrap();
        assert_eq!(one.shift, 1);
        assert_eq!(one.mass, vec![1.0]);
    }

    #[test]
    fn karamata_stirling_dual_engine_moderate() {
        for (num, den) in [(1u64, 2u64), (1, 1), (2, 1)] {
            let t = num as f64 / den as f64;
            let exact = karamata_stirling_pmf_exact(num, den, 40).unwrap();
            let pmf = pmf_dp(&karamata_stirling_profile(t, 40).unwrap(), DEFAULT_EPS).unwrap();
            for k in 0..=40usize {
                let (a, b) = (exact[k], pmf.prob(k as i64));
                if a.max(b) > 1e-300 {
                    assert!(
                        (a - b).abs() <= 1e-9 * a.max(b),
                        "t={t} k={k}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn digamma_values() {
        let gamma = 0.5772156649015329;
        assert!((digamma(1.0) + gamma).abs() < 1e-12);
        assert!((digamma(2.0) - (1.0 - gamma)).abs() < 1e-12);
        assert!((digamma(0.5) + gamma + 2.0 * (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ks_mean_and_asymptotic() {
        assert!((ks_mean(3, 1.0) - (1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-14);
        // u(n,t) tracks the harmonic mean growth: for t=1,
        // u = log n - gamma, mu = H_n ~ log n + gamma; both within O(1)
        let u = ks_asymptotic_mode(1000, 1.0);
        let mu = ks_mean(1000, 1.0);
        assert!((u - mu).abs() < 1.5, "u={u} mu={mu}");
    }

    #[test]
    fn scan_binomial_n() {
        let family = FamilySpec::BinomialN { p_num: 1, p_den: 3 };
        let report = cross_modality_scan(&family, 0, 10).unwrap();
        assert!(report.all_pass);
        let e2 = report.entries.iter().find(|e| e.k == 2).unwrap();
        assert_eq!((e2.ell_lo, e2.ell_hi), (5.0, 6.0));
        assert!(e2.m_lo <= 2 && 2 <= e2.m_hi);
    }

    #[test]
    fn scan_binomial_n_all_rationals() {
        for b in 2..=8i64 {
            for a in 1..b {
                let family = FamilySpec::BinomialN { p_num: a, p_den: b };
                let report = cross_modality_scan(&family, 0, 12).unwrap();
                assert!(report.all_pass, "p = {a}/{b}");
            }
        }
    }

    #[test]
    fn scan_other_families() {
        assert!(cross_modality_scan(&FamilySpec::Poisson, 0, 10).unwrap().all_pass);
        assert!(
            cross_modality_scan(&FamilySpec::BinomialP { n: 9 }, 0, 9)
                .unwrap()
                .all_pass
        );
        let cosh = FamilySpec::PowerSeries {
            kind: PowerSeriesKind::CoshSqrt,
        };
        assert!(cross_modality_scan(&cosh, 1, 4).unwrap().all_pass);
        let scaled = FamilySpec::ScaledEbs {
            base: Profile::finitary(0.5, vec![0.4, 0.3]).unwrap(),
        };
        assert!(cross_modality_scan(&scaled, 0, 5).unwrap().all_pass);
        let ks = FamilySpec::KaramataStirling { t: 1.0, n_max: 60 };
        let report = cross_modality_scan(&ks, 1, 4).unwrap();
        assert!(report.all_pass);
        // maximizer interval in n starts where the mode first reaches k
        for e in &report.entries {
            let first = (1..=60u64)
                .find(|&n| {
                    let pmf = pmf_dp(&karamata_stirling_profile(1.0, n).unwrap(), DEFAULT_EPS)
                        .unwrap();
                    mode_of(&pmf, DEFAULT_TIE_TOL).unwrap().m_plus == e.k
                })
                .unwrap();
            assert_eq!(e.ell_lo as u64, first, "k={}", e.k);
        }
    }

    #[test]
    fn family_spec_serde() {
        let f = FamilySpec::KaramataStirling { t: 2.0, n_max: 100 };
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("karamata-stirling"));
        let back: FamilySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
        let f = FamilySpec::PowerSeries {
            kind: PowerSeriesKind::CoshSqrt,
        };
        let s = serde_json::to_string(&f).unwrap();
        let back: FamilySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn directed_chains() {
        // pure append chain (binomial growth)
        let chain: Vec<Profile> = (0..=6)
            .map(|n| Profile::finitary(0.0, vec![1.0 / 3.0; n]).unwrap())
            .collect();
        assert!(directed_sequence_check(&chain).unwrap());
        // Karamata-Stirling chain in n
        let chain: Vec<Profile> = (1..=8)
            .map(|n| karamata_stirling_profile(1.0, n).unwrap())
            .collect();
        assert!(directed_sequence_check(&chain).unwrap());
        // Poisson increment within gamma* is legal, beyond is flagged
        let base = Profile::finitary(1.6, vec![]).unwrap();
        let gamma = peak_skewness(&pmf_dp(&base, DEFAULT_EPS).unwrap()).unwrap();
        let legal = vec![base.clone(), Profile::finitary(1.6 + gamma * 0.9, vec![]).unwrap()];
        assert!(directed_sequence_check(&legal).unwrap());
        let illegal = vec![base.clone(), Profile::finitary(1.6 + gamma + 0.1, vec![]).unwrap()];
        assert!(!directed_sequence_check(&illegal).unwrap());
        // unrecognized step
        let bad = vec![
            Profile::finitary(0.0, vec![0.5, 0.5]).unwrap(),
            Profile::finitary(0.0, vec![0.4, 0.4]).unwrap(),
        ];
        assert!(directed_sequence_check(&bad).is_err());
    }
}
