//! The extended Darroch mean-mode rule and the finitary geometry of the
//! bifurcation manifolds F_{k,n} and mean sections M_{k,n}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ebs_core::{pmf_dp, Profile};
use crate::modal_analysis::mode_of;
use crate::{Error, Result, DEFAULT_EPS, DEFAULT_TIE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    DefiniteSingle,
    TwinLower,
    TwinUpper,
    AmbiguousBand,
    IntegerMeanSingle,
    ShiftedPoissonException,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarrochVerdict {
    pub mu: f64,
    pub m_minus: i64,
    pub m_plus: i64,
    pub classification: Classification,
    pub pass: bool,
}

/// Tolerance for declaring the mean an integer.
fn mean_is_integer(mu: f64) -> Option<i64> {
    let k = mu.round();
    if (mu - k).abs() <= 1e-12 * mu.max(1.0) {
        Some(k as i64)
    } else {
        None
    }
}

/// True for the exception shape of the mean-mode rule: a positive integer
/// Poisson rate plus only deterministic components, i.e. a shifted Poisson.
fn is_shifted_poisson(profile: &Profile) -> bool {
    profile.lambda > 0.0
        && profile
            .probs
            .iter()
            .all(|&p| p <= 1e-12 || p >= 1.0 - 1e-12)
}

/// Verifies the extended mean-mode rule: for k < mu < k+1 the mode lies in
/// {k, k+1} and the leave-out-max profile has leading mode <= k; an integer
/// mean forces a single mode there, except for shifted Poisson profiles
/// which have the twin mode {k-1, k}.
pub fn darroch_check(profile: &Profile) -> Result<DarrochVerdict> {
    profile.validate()?;
    if profile.tail_mass >= 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "tail_mass = {} too large to certify the rule",
            profile.tail_mass
        )));
    }
    let mu = profile.mean();
    let pmf = pmf_dp(profile, DEFAULT_EPS)?;
    let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
    if let Some(k) = mean_is_integer(mu) {
        if is_shifted_poisson(profile) && k >= 1 {
            let pass = m.twin && m.m_minus == k - 1 && m.m_plus == k;
            return Ok(DarrochVerdict {
                mu,
                m_minus: m.m_minus,
                m_plus: m.m_plus,
                classification: Classification::ShiftedPoissonException,
                pass,
            });
        }
        let pass = !m.twin && m.m_minus == k && m.m_plus == k;
        return Ok(DarrochVerdict {
            mu,
            m_minus: m.m_minus,
            m_plus: m.m_plus,
            classification: Classification::IntegerMeanSingle,
            pass,
        });
    }
    let k = mu.floor() as i64;
    let mut pass = k <= m.m_minus && m.m_minus <= m.m_plus && m.m_plus <= k + 1;
    // leave out the largest fractional success probability
    let max_i = profile
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i);
    if let Some(i) = max_i {
        let loo = mode_of(&pmf_dp(&profile.without(i), DEFAULT_EPS)?, DEFAULT_TIE_TOL)?;
        pass &= loo.m_plus <= k;
    }
    let classification = if m.twin {
        if m.m_plus == k + 1 {
            Classification::TwinUpper
        } else {
            Classification::TwinLower
        }
    } else {
        Classification::DefiniteSingle
    };
    Ok(DarrochVerdict {
        mu,
        m_minus: m.m_minus,
        m_plus: m.m_plus,
        classification,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitaryBounds {
    pub min_mu: f64,
    pub max_mu: f64,
    pub argmin: Profile,
    pub argmax: Profile,
}

/// Range of the mean over the bifurcation set F_{k,n} = {f(k-1) = f(k)} in n
/// Bernoulli components: min k-1+1/(k+1) at k copies of k/(k+1), max
/// k-1/(n-k+2) at k-1 ones plus n-k+1 copies of 1/(n-k+2).
pub fn finitary_bounds(k: u64, n: u64) -> Result<FinitaryBounds> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 0 < k <= n, got k={k} n={n}")));
    }
    let kf = k as f64;
    let min_mu = kf - 1.0 + 1.0 / (kf + 1.0);
    let max_mu = kf - 1.0 / (n - k + 2) as f64;

    let mut pmin = vec![0.0; n as usize];
    for v in pmin.iter_mut().take(k as usize) {
        *v = kf / (kf + 1.0);
    }
    let argmin = Profile::finitary(0.0, pmin)?;

    let tail = 1.0 / (n - k + 2) as f64;
    let mut pmax = vec![tail; n as usize];
    for v in pmax.iter_mut().take(k as usize - 1) {
        *v = 1.0;
    }
    let argmax = Profile::finitary(0.0, pmax)?;

    for (profile, mu) in [(&argmin, min_mu), (&argmax, max_mu)] {
        if (profile.mean() - mu).abs() > 1e-12 * mu.max(1.0) {
            return Err(Error::Internal("extremal profile mean mismatch".into()));
        }
        let pmf = pmf_dp(profile, DEFAULT_EPS)?;
        let (a, b) = (pmf.prob(k as i64 - 1), pmf.prob(k as i64));
        if (a - b).abs() > 1e-10 * a.max(b) {
            return Err(Error::Internal(format!(
                "extremal profile balance f({}) = f({k}) violated: {a} vs {b}",
                k - 1
            )));
        }
    }
    Ok(FinitaryBounds {
        min_mu,
        max_mu,
        argmin,
        argmax,
    })
}

/// Classifies a pure Bernoulli profile by where its mean falls in the region
/// table: the definite region forcing a single mode k, the two twin
/// boundaries, or the ambiguous band where the mode must be read off the
/// PMF. The verdict is checked against the actual mode.
pub fn region_classify(profile: &Profile) -> Result<DarrochVerdict> {
    profile.validate()?;
    if profile.lambda != 0.0 {
        return Err(Error::InvalidArgument(
            "region table applies to lambda = 0 profiles".into(),
        ));
    }
    if !profile.is_finitary() {
        return Err(Error::InvalidArgument("profile must be finitary".into()));
    }
    let n = profile.probs.len() as u64;
    let mu = profile.mean();
    let pmf = pmf_dp(profile, DEFAULT_EPS)?;
    let m = mode_of(&pmf, DEFAULT_TIE_TOL)?;
    let tol = 1e-12 * mu.max(1.0);

    let mut classification = Classification::AmbiguousBand;
    let mut expected: Option<(i64, i64, bool)> = None; // (m_lo, m_hi, forced)
    for k in 0..=n {
        let kf = k as f64;
        let lower = if k == 0 {
            f64::NEG_INFINITY
        } else {
            kf - 1.0 / (n - k + 2) as f64
        };
        let upper = if k == n {
            f64::INFINITY
        } else {
            kf + 1.0 / (kf + 2.0)
        };
        if k >= 1 && (mu - lower).abs() <= tol {
            classification = Classification::TwinLower;
            // twin {k-1, k} at the extremal profile; generic profiles on the
            // hyperplane are checked against containment only
            expected = Some((k as i64 - 1, k as i64, false));
            break;
        }
        if k < n && (mu - upper).abs() <= tol {
            classification = Classification::TwinUpper;
            expected = Some((k as i64, k as i64 + 1, false));
            break;
        }
        if lower < mu && mu < upper {
            classification = Classification::DefiniteSingle;
            expected = Some((k as i64, k as i64, true));
            break;
        }
        // ambiguous band for k: (k-1+1/(k+1), k-1/(n-k+2))
        if k >= 1 && kf - 1.0 + 1.0 / (kf + 1.0) < mu && mu < lower {
            classification = Classification::AmbiguousBand;
            expected = Some((k as i64 - 1, k as i64, false));
            break;
        }
    }
    let pass = match expected {
        Some((lo, hi, true)) => m.m_minus == lo && m.m_plus == hi,
        Some((lo, hi, false)) => lo <= m.m_minus && m.m_plus <= hi,
        None => false,
    };
    Ok(DarrochVerdict {
        mu,
        m_minus: m.m_minus,
        m_plus: m.m_plus,
        classification,
        pass,
    })
}

/// Vertices of the section {mu = k} of the ordered simplex
/// {1 >= p_1 >= ... >= p_n >= 0}: i ones followed by j-i copies of
/// (k-i)/(j-i), for 0 <= i < k < j <= n, plus the all-ones-then-zeros point.
pub fn me_extremal_simplex(k: u64, n: u64) -> Result<Vec<Profile>> {
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("need 0 < k < n, got k={k} n={n}")));
    }
    let mut out = Vec::new();
    let mut ones = vec![0.0; n as usize];
    for v in ones.iter_mut().take(k as usize) {
        *v = 1.0;
    }
    out.push(Profile::finitary(0.0, ones)?);
    for i in 0..k {
        for j in (k + 1)..=n {
            let mut p = vec![0.0; n as usize];
            for v in p.iter_mut().take(i as usize) {
                *v = 1.0;
            }
            let level = (k - i) as f64 / (j - i) as f64;
            for v in p.iter_mut().take(j as usize).skip(i as usize) {
                *v = level;
            }
            out.push(Profile::finitary(0.0, p)?);
        }
    }
    for profile in &out {
        if (profile.mean() - k as f64).abs() > 1e-12 * k as f64 {
            return Err(Error::Internal("simplex vertex mean mismatch".into()));
        }
    }
    Ok(out)
}

/// Random member of F_{k,n}: draws success probabilities uniformly, then
/// scales all odds by a common factor found by bisection so that
/// f(k-1) = f(k).
pub fn sample_f_kn(k: u64, n: u64, rng: &mut ChaCha8Rng) -> Result<Profile> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 0 < k <= n, got k={k} n={n}")));
    }
    let base: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    let odds: Vec<f64> = base.iter().map(|&p| p / (1.0 - p)).collect();
    let at = |z: f64| -> Result<f64> {
        let probs: Vec<f64> = odds.iter().map(|&r| z * r / (1.0 + z * r)).collect();
        let pmf = pmf_dp(&Profile::finitary(0.0, probs)?, DEFAULT_EPS)?;
        Ok(pmf.prob(k as i64) - pmf.prob(k as i64 - 1))
    };
    let mut lo = 1e-9;
    let mut hi = 1e9;
    if at(lo)? > 0.0 || at(hi)? < 0.0 {
        return Err(Error::Internal("balance root not bracketed".into()));
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if at(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = (lo * hi).sqrt();
    let probs: Vec<f64> = odds.iter().map(|&r| z * r / (1.0 + z * r)).collect();
    Profile::finitary(0.0, probs)
}

/// One row of a randomized suite, CSV-friendly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub seed: u64,
    pub case_id: u64,
    pub profile_hash: u64,
    pub mu: f64,
    pub m_minus: i64,
    pub m_plus: i64,
    pub pass: bool,
}

pub fn suite_csv(rows: &[SuiteRow]) -> String {
    let mut out = String::from("seed,case_id,profile_hash,mu,m_minus,m_plus,pass\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:016x},{:.16e},{},{},{}\n",
            r.seed, r.case_id, r.profile_hash, r.mu, r.m_minus, r.m_plus, r.pass
        ));
    }
    out
}

/// FNV-1a over the profile bytes, for reproducible row identification.
fn profile_hash(profile: &Profile) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(profile.lambda.to_bits());
    for &p in &profile.probs {
        eat(p.to_bits());
    }
    h
}

/// Randomized mean-mode suite: `cases` random profiles with n <= 20 and
/// lambda in [0,5]; checks |mu - m| <= 1 on both ends, the full rule via
/// `darroch_check`, and the sharper finitary implication
/// mu + min p_i > k => m_minus >= k.
pub fn darroch_random_suite(cases: u64, seed: u64) -> Result<Vec<SuiteRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(cases as usize);
    for case_id in 0..cases {
        let n = rng.gen_range(1..=20usize);
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let lambda = rng.gen_range(0.0..5.0);
        let profile = Profile::finitary(lambda, probs)?;
        let verdict = darroch_check(&profile)?;
        let mu = verdict.mu;
        let mut pass = verdict.pass
            && (mu - verdict.m_plus as f64).abs() <= 1.0 + 1e-12
            && (mu - verdict.m_minus as f64).abs() <= 1.0 + 1e-12;
        // sharper implication with the smallest positive component
        if let Some(&pmin) = profile
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            let k = mu.floor();
            if mu + pmin > k && mu - k > 1e-9 {
                pass &= verdict.m_minus >= k as i64;
            }
        }
        rows.push(SuiteRow {
            seed,
            case_id,
            profile_hash: profile_hash(&profile),
            mu,
            m_minus: verdict.m_minus,
            m_plus: verdict.m_plus,
            pass,
        });
    }
    Ok(rows)
}

/// Integer-mean suite: random profiles rescaled in one coordinate so the
/// mean is exactly an integer; every non-exceptional case must have the
/// single mode at the mean.
pub fn integer_mean_suite(cases: u64, seed: u64) -> Result<Vec<SuiteRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(cases as usize);
    let mut case_id = 0;
    while case_id < cases {
        let n = rng.gen_range(2..=15usize);
        let mut probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let lambda = if rng.gen_bool(0.5) {
            rng.gen_range(0.0..3.0)
        } else {
            0.0
        };
        let partial: f64 = lambda + probs[1..].iter().sum::<f64>();
        let k = partial.ceil() as i64;
        let adjust = k as f64 - partial;
        if !(1e-6 < adjust && adjust < 1.0 - 1e-6) {
            continue;
        }
        probs[0] = adjust;
        let profile = Profile::finitary(lambda, probs)?;
        if is_shifted_poisson(&profile) {
            continue;
        }
        let verdict = darroch_check(&profile)?;
        let pass = verdict.classification == Classification::IntegerMeanSingle
            && verdict.pass
            && verdict.m_minus == k
            && verdict.m_plus == k;
        rows.push(SuiteRow {
            seed,
            case_id,
            profile_hash: profile_hash(&profile),
            mu: verdict.mu,
            m_minus: verdict.m_minus,
            m_plus: verdict.m_plus,
            pass,
        });
        case_id += 1;
    }
    Ok(rows)
}
