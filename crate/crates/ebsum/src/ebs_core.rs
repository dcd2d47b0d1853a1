//! Parameters of extended Bernoulli sums and their probability functions,
//! computed by two independent engines with certified truncation error.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest Poisson rate the linear-space engines accept before the smallest
/// retained masses leave the normal f64 range.
const MAX_LAMBDA: f64 = 700.0;

/// Parameter point of an extended Bernoulli sum: a Poisson rate plus a finite
/// vector of Bernoulli success probabilities. `tail_mass` bounds the total
/// success probability omitted when the profile truncates an infinite one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub lambda: f64,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub tail_mass: f64,
}

impl Profile {
    pub fn new(lambda: f64, probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        let p = Profile {
            lambda,
            probs,
            tail_mass,
        };
        p.validate()?;
        Ok(p)
    }

    /// Profile with no omitted tail.
    pub fn finitary(lambda: f64, probs: Vec<f64>) -> Result<Self> {
        Self::new(lambda, probs, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tail_mass >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tail_mass must be >= 0, got {}",
                self.tail_mass
            )));
        }
        for (i, &p) in self.probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "probs[{i}] = {p} outside [0,1]"
                )));
            }
        }
        Ok(())
    }

    /// lambda + sum of success probabilities (omitted tail excluded; callers
    /// may add `tail_mass` as an interval correction).
    pub fn mean(&self) -> f64 {
        self.lambda + self.probs.iter().sum::<f64>()
    }

    pub fn is_finitary(&self) -> bool {
        self.tail_mass == 0.0
    }

    /// True when some success probability sits in (1 - 1e-12, 1): the product
    /// for f(0) is then computed through logs but the odds blow up and results
    /// deserve scrutiny.
    pub fn has_near_one(&self) -> bool {
        self.probs.iter().any(|&p| p < 1.0 && p > 1.0 - 1e-12)
    }

    /// Profile with the Bernoulli component at `i` removed.
    pub fn without(&self, i: usize) -> Profile {
        let mut probs = self.probs.clone();
        probs.remove(i);
        Profile {
            lambda: self.lambda,
            probs,
            tail_mass: self.tail_mass,
        }
    }
}

/// Probability function over a finite window, with the deterministic part
/// (Bernoulli components equal to one) factored out as an index shift.
/// `mass[j]` holds P[S = shift + j].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub shift: usize,
    pub mass: Vec<f64>,
    pub trunc_err: f64,
}

impl Pmf {
    /// P[S = k] with k counted on the absolute axis (shift included).
    pub fn prob(&self, k: i64) -> f64 {
        let j = k - self.shift as i64;
        self.local(j)
    }

    /// Mass at window index j, zero outside the stored window.
    pub fn local(&self, j: i64) -> f64 {
        if j < 0 || j as usize >= self.mass.len() {
            0.0
        } else {
            self.mass[j as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

/// Extended elementary symmetric functions E_k(lambda, r) in the odds,
/// E_k = sum_{j<=k} lambda^{k-j}/(k-j)! e_j(r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricTable {
    pub e: Vec<f64>,
}

/// Mean of the extended Bernoulli sum.
pub fn mean(profile: &Profile) -> f64 {
    profile.mean()
}

/// Poisson(lambda) masses with certified tail: the returned vector covers
/// 0..=K with K chosen so the omitted tail is below eps/2, verified by the
/// geometric remainder bound of the exponential series.
fn poisson_mass(lambda: f64, eps: f64) -> Result<(Vec<f64>, f64)> {
    if lambda == 0.0 {
        return Ok((vec![1.0], 0.0));
    }
    if lambda > MAX_LAMBDA {
        return Err(Error::Budget(format!(
            "lambda = {lambda} exceeds the linear-space limit {MAX_LAMBDA}"
        )));
    }
    let mut cap = ((lambda + 12.0 * (lambda + 1.0).sqrt() + 25.0).ceil() as usize).max(40);
    loop {
        // terms t_k = e^-lambda lambda^k / k!, built iteratively
        let mut terms = Vec::with_capacity(cap + 1);
        let mut t = (-lambda).exp();
        terms.push(t);
        for k in 1..=cap {
            t *= lambda / k as f64;
            terms.push(t);
        }
        // tail after cap: t_{cap+1} * 1/(1 - q) with q = lambda/(cap+2) < 1
        let t_next = t * lambda / (cap + 1) as f64;
        let q = lambda / (cap + 2) as f64;
        let tail = if q < 1.0 {
            t_next / (1.0 - q)
        } else {
            f64::INFINITY
        };
        if tail < eps / 2.0 {
            return Ok((terms, tail));
        }
        cap *= 2;
        if cap > 1 << 24 {
            return Err(Error::Budget(format!(
                "Poisson truncation did not certify tail < {eps}/2"
            )));
        }
    }
}

/// Splits a profile into (shift from unit probabilities, fractional
/// probabilities sorted decreasing). Zero probabilities are dropped.
fn split_profile(profile: &Profile) -> (usize, Vec<f64>) {
    let mut shift = 0usize;
    let mut ps: Vec<f64> = Vec::with_capacity(profile.probs.len());
    for &p in &profile.probs {
        if p == 1.0 {
            shift += 1;
        } else if p > 0.0 {
            ps.push(p);
        }
    }
    // fixed fold order for reproducibility
    ps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (shift, ps)
}

fn convolve_bernoulli(mass: &[f64], p: f64) -> Vec<f64> {
    let mut out = vec![0.0; mass.len() + 1];
    let q = 1.0 - p;
    for (k, &m) in mass.iter().enumerate() {
        out[k] += q * m;
        out[k + 1] += p * m;
    }
    out
}

/// Probability function by direct dynamic programming: the Poisson base is
/// folded with each Bernoulli factor through the one-step recursion
/// f(k; p ∪ p') = p' f(k-1; p) + (1-p') f(k; p).
pub fn pmf_dp(profile: &Profile, eps: f64) -> Result<Pmf> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    profile.validate()?;
    let (shift, ps) = split_profile(profile);
    let (mut mass, tail) = poisson_mass(profile.lambda, eps)?;
    for &p in &ps {
        mass = convolve_bernoulli(&mass, p);
    }
    Ok(Pmf {
        shift,
        mass,
        trunc_err: tail + profile.tail_mass,
    })
}

/// Extended elementary symmetric functions of the profile's odds, seeded from
/// the pure-Poisson column lambda^k/k! and folded one odds value at a time.
/// `len` is the number of entries requested beyond what the odds provide.
pub fn symmetric_table(profile: &Profile, poisson_len: usize) -> Result<SymmetricTable> {
    profile.validate()?;
    let (_, ps) = split_profile(profile);
    let mut e = Vec::with_capacity(poisson_len + ps.len());
    let mut t = 1.0f64;
    e.push(t);
    for k in 1..poisson_len {
        t *= profile.lambda / k as f64;
        e.push(t);
    }
    for &p in &ps {
        let r = p / (1.0 - p);
        e.push(0.0);
        for k in (1..e.len()).rev() {
            e[k] += r * e[k - 1];
        }
    }
    Ok(SymmetricTable { e })
}

/// Probability function through the symmetric-function identity
/// f(k) = f(0) E_k(lambda, r). Independent of `pmf_dp` except for the shared
/// Poisson seed column; the two must agree entrywise.
pub fn pmf_symmetric(profile: &Profile, eps: f64) -> Result<Pmf> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    profile.validate()?;
    let (shift, ps) = split_profile(profile);
    // Internal column scaled by e^-lambda so large lambda stays in range;
    // scaling commutes with the linear fold recursion.
    let (mut e, tail) = poisson_mass(profile.lambda, eps)?;
    for &p in &ps {
        let r = p / (1.0 - p);
        e.push(0.0);
        for k in (1..e.len()).rev() {
            e[k] += r * e[k - 1];
        }
    }
    // f(0) split: e already carries e^-lambda, the Bernoulli part comes in
    // through log(1-p) to survive products of many near-one factors.
    let log_q: f64 = ps.iter().map(|&p| (1.0 - p).ln()).sum();
    let f0 = log_q.exp();
    let mass: Vec<f64> = e.iter().map(|&v| v * f0).collect();
    Ok(Pmf {
        shift,
        mass,
        trunc_err: tail + profile.tail_mass,
    })
}

/// One-step convolution with an independent Bernoulli(p) variable.
/// p = 1 increments the shift instead of touching the window.
pub fn add_bernoulli(pmf: &Pmf, p: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [0,1]")));
    }
    if p == 1.0 {
        return Ok(Pmf {
            shift: pmf.shift + 1,
            mass: pmf.mass.clone(),
            trunc_err: pmf.trunc_err,
        });
    }
    if p == 0.0 {
        return Ok(pmf.clone());
    }
    Ok(Pmf {
        shift: pmf.shift,
        mass: convolve_bernoulli(&pmf.mass, p),
        trunc_err: pmf.trunc_err,
    })
}

/// Absolute residual of the size-bias identity
/// k f(k) = sum_i p_i f(k-1; without i) + lambda f(k-1),
/// with every probability computed by `pmf_dp` on the stated (sub)profile.
pub fn identity_vi_residual(profile: &Profile, k: usize) -> Result<f64> {
    if !profile.is_finitary() {
        return Err(Error::InvalidArgument(
            "identity check requires a finitary profile".into(),
        ));
    }
    let eps = crate::DEFAULT_EPS;
    let full = pmf_dp(profile, eps)?;
    let lhs = k as f64 * full.prob(k as i64);
    let mut rhs = profile.lambda * full.prob(k as i64 - 1);
    for i in 0..profile.probs.len() {
        let p = profile.probs[i];
        if p == 0.0 {
            continue;
        }
        let loo = pmf_dp(&profile.without(i), eps)?;
        rhs += p * loo.prob(k as i64 - 1);
    }
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    /// Exhaustive 2^n enumeration oracle for a pure Bernoulli profile.
    fn enumerate_pmf(probs: &[f64]) -> Vec<f64> {
        let n = probs.len();
        let mut mass = vec![0.0; n + 1];
        for bits in 0u32..(1 << n) {
            let mut pr = 1.0;
            let mut count = 0usize;
            for (i, &p) in probs.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    pr *= p;
                    count += 1;
                } else {
                    pr *= 1.0 - p;
                }
            }
            mass[count] += pr;
        }
        mass
    }

    #[test]
    fn mean_examples() {
        assert_eq!(Profile::finitary(0.0, vec![]).unwrap().mean(), 0.0);
        let p = Profile::finitary(0.0, vec![0.9, 0.6, 0.3]).unwrap();
        assert!((p.mean() - 1.8).abs() < 1e-15);
        let p = Profile::finitary(1.5, vec![0.5, 0.5]).unwrap();
        assert!((p.mean() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn dp_matches_enumeration_example() {
        let profile = Profile::finitary(0.0, vec![0.9, 0.6, 0.3]).unwrap();
        let pmf = pmf_dp(&profile, 1e-12).unwrap();
        let expect = enumerate_pmf(&profile.probs);
        assert_eq!(pmf.shift, 0);
        assert_eq!(pmf.mass.len(), 4);
        for (a, b) in pmf.mass.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        // frozen values from the enumeration oracle
        assert!((pmf.mass[0] - 0.028).abs() < 1e-12);
        assert!((pmf.mass[1] - 0.306).abs() < 1e-12);
        assert!((pmf.mass[2] - 0.504).abs() < 1e-12);
        assert!((pmf.mass[3] - 0.162).abs() < 1e-12);
    }

    #[test]
    fn dp_unit_probabilities_become_shift() {
        let profile = Profile::finitary(0.0, vec![1.0, 1.0]).unwrap();
        let pmf = pmf_dp(&profile, 1e-12).unwrap();
        assert_eq!(pmf.shift, 2);
        assert_eq!(pmf.mass, vec![1.0]);
    }

    #[test]
    fn dp_pure_poisson_two() {
        let profile = Profile::finitary(2.0, vec![]).unwrap();
        let pmf = pmf_dp(&profile, 1e-12).unwrap();
        let mut term = (-2.0f64).exp();
        for k in 0..10 {
            assert!(rel_close(pmf.mass[k], term, 1e-13));
            term *= 2.0 / (k + 1) as f64;
        }
        // twin mode at {1,2}
        assert!(rel_close(pmf.mass[1], pmf.mass[2], 1e-14));
        assert!(pmf.trunc_err < 1e-12);
        assert!((pmf.total() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn symmetric_matches_dp_example() {
        let profile = Profile::finitary(0.0, vec![0.9, 0.6, 0.3]).unwrap();
        let a = pmf_dp(&profile, 1e-12).unwrap();
        let b = pmf_symmetric(&profile, 1e-12).unwrap();
        assert_eq!(a.mass.len(), b.mass.len());
        for (x, y) in a.mass.iter().zip(&b.mass) {
            assert!(rel_close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn symmetric_single_fair_bernoulli() {
        let profile = Profile::finitary(0.0, vec![0.5]).unwrap();
        let pmf = pmf_symmetric(&profile, 1e-12).unwrap();
        assert!(rel_close(pmf.mass[0], 0.5, 1e-15));
        assert!(rel_close(pmf.mass[1], 0.5, 1e-15));
    }

    #[test]
    fn symmetric_table_one_bernoulli_with_poisson() {
        // lambda=1, p=0.5: odds r=1, E_1 = lambda + r = 2, f(0) = e^-1 * 0.5
        let profile = Profile::finitary(1.0, vec![0.5]).unwrap();
        let table = symmetric_table(&profile, 8).unwrap();
        assert_eq!(table.e[0], 1.0);
        assert!(rel_close(table.e[1], 2.0, 1e-14));
        let pmf = pmf_symmetric(&profile, 1e-12).unwrap();
        let f0 = (-1.0f64).exp() * 0.5;
        assert!(rel_close(pmf.mass[0], f0, 1e-13));
        assert!(rel_close(pmf.mass[1], f0 * 2.0, 1e-13));
    }

    #[test]
    fn add_bernoulli_examples() {
        let base = Pmf {
            shift: 0,
            mass: vec![1.0],
            trunc_err: 0.0,
        };
        let out = add_bernoulli(&base, 0.3).unwrap();
        assert_eq!(out.mass, vec![0.7, 0.3]);

        let half = Pmf {
            shift: 0,
            mass: vec![0.5, 0.5],
            trunc_err: 0.0,
        };
        let shifted = add_bernoulli(&half, 1.0).unwrap();
        assert_eq!(shifted.shift, 1);
        assert_eq!(shifted.mass, vec![0.5, 0.5]);

        let b2 = Pmf {
            shift: 0,
            mass: vec![0.25, 0.5, 0.25],
            trunc_err: 0.0,
        };
        let b3 = add_bernoulli(&b2, 0.5).unwrap();
        for (a, b) in b3.mass.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(add_bernoulli(&base, 1.5).is_err());
    }

    #[test]
    fn identity_vi_examples() {
        let p = Profile::finitary(0.0, vec![0.9, 0.6, 0.3]).unwrap();
        assert!(identity_vi_residual(&p, 2).unwrap() <= 1e-12);
        let p = Profile::finitary(1.0, vec![]).unwrap();
        assert!(identity_vi_residual(&p, 3).unwrap() <= 1e-12);
        let p = Profile::finitary(0.5, vec![0.4, 0.2]).unwrap();
        assert!(identity_vi_residual(&p, 1).unwrap() <= 1e-12);
    }

    #[test]
    fn eps_must_be_positive() {
        let p = Profile::finitary(0.0, vec![0.5]).unwrap();
        assert!(pmf_dp(&p, 0.0).is_err());
        assert!(pmf_symmetric(&p, -1.0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let p = Profile::new(2.0, vec![0.3, 0.7], 1e-6).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"lambda\""));
        let back: Profile = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        // tail_mass defaults to 0 when omitted
        let q: Profile = serde_json::from_str(r#"{"lambda":0,"probs":[0.5]}"#).unwrap();
        assert_eq!(q.tail_mass, 0.0);
    }

    proptest! {
        #[test]
        fn engines_agree_and_normalize(
            lambda in 0.0f64..8.0,
            probs in proptest::collection::vec(0.0f64..0.999, 0..12),
        ) {
            let profile = Profile::finitary(lambda, probs).unwrap();
            let a = pmf_dp(&profile, 1e-12).unwrap();
            let b = pmf_symmetric(&profile, 1e-12).unwrap();
            prop_assert_eq!(a.mass.len(), b.mass.len());
            for (x, y) in a.mass.iter().zip(&b.mass) {
                prop_assert!(rel_close(*x, *y, 1e-10));
            }
            prop_assert!((a.total() - 1.0).abs() <= 1e-11);
        }

        #[test]
        fn logconcavity_holds(
            lambda in 0.0f64..6.0,
            probs in proptest::collection::vec(0.0f64..1.0, 0..10),
        ) {
            let profile = Profile::finitary(lambda, probs).unwrap();
            let pmf = pmf_dp(&profile, 1e-12).unwrap();
            for j in 1..pmf.mass.len().saturating_sub(1) {
                let (a, b, c) = (pmf.mass[j - 1], pmf.mass[j], pmf.mass[j + 1]);
                if a > 0.0 && b > 0.0 && c > 0.0 {
                    prop_assert!(b * b >= a * c * (1.0 - 1e-10));
                }
            }
        }

        #[test]
        fn ultra_logconcavity_holds(
            lambda in 0.0f64..6.0,
            probs in proptest::collection::vec(0.0f64..1.0, 0..10),
        ) {
            let profile = Profile::finitary(lambda, probs).unwrap();
            let pmf = pmf_dp(&profile, 1e-12).unwrap();
            for k in 1..pmf.mass.len().saturating_sub(1) {
                let lhs = k as f64 * pmf.mass[k] * pmf.mass[k];
                let rhs = (k + 1) as f64 * pmf.mass[k - 1] * pmf.mass[k + 1];
                prop_assert!(lhs >= rhs * (1.0 - 1e-10));
            }
        }
    }

    #[test]
    fn monotone_likelihood_ratio_under_parameter_increase() {
        let base = Profile::finitary(0.7, vec![0.8, 0.45, 0.2]).unwrap();
        let pmf0 = pmf_dp(&base, 1e-12).unwrap();
        let mut bumps: Vec<Profile> = (0..base.probs.len())
            .map(|i| {
                let mut p = base.clone();
                p.probs[i] += 0.01;
                p
            })
            .collect();
        let mut lam = base.clone();
        lam.lambda += 0.01;
        bumps.push(lam);
        for bumped in &bumps {
            let pmf1 = pmf_dp(bumped, 1e-12).unwrap();
            for k in 0..pmf0.mass.len() - 1 {
                let (n0, d0) = (pmf0.mass[k + 1], pmf0.mass[k]);
                let (n1, d1) = (pmf1.local(k as i64 + 1), pmf1.local(k as i64));
                if n0 > 1e-300 && d0 > 1e-300 && n1 > 1e-300 && d1 > 1e-300 {
                    assert!(n1 / d1 > n0 / d0, "MLR violated at k={k}");
                }
            }
        }
    }
}
