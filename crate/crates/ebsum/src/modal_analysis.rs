//! Modal structure of a probability function: modes, peak height, peak
//! skewness, medians, and the effect of convolving in one more Bernoulli
//! variable.

use serde::{Deserialize, Serialize};

use crate::ebs_core::{pmf_dp, Pmf, Profile};
use crate::{Error, Result, DEFAULT_EPS, DEFAULT_TIE_TOL};

/// Mode interval, peak height and peak skewness of a logconcave pmf.
/// Indices include the deterministic shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub m_minus: i64,
    pub m_plus: i64,
    pub peak: f64,
    pub twin: bool,
    pub skewness: f64,
    #[serde(skip)]
    pub degenerate: bool,
}

/// Integer interval of medians: every k in [lo, hi] has both tails >= 1/2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedianInterval {
    pub lo: i64,
    pub hi: i64,
}

/// Sign class of the partial derivative of the peak height in one success
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakDerivative {
    Increasing,
    Decreasing,
    Stationary,
}

/// Leading-mode window indices (into `mass`, shift excluded): (m_minus,
/// m_plus). Relations use the relative tie tolerance.
fn mode_indices(mass: &[f64], tie_tol: f64) -> Result<(usize, usize)> {
    let mut best = 0usize;
    for (j, &v) in mass.iter().enumerate() {
        if v > mass[best] {
            best = j;
        }
    }
    if mass[best] <= 0.0 {
        return Err(Error::InvalidArgument("all-zero pmf".into()));
    }
    let tied = |a: f64, b: f64| (a - b).abs() <= tie_tol * a.max(b);
    // argmax picks the first of equal values, so a tie can only sit on either
    // side of `best`, never both (logconcavity excludes three equal values)
    if best + 1 < mass.len() && tied(mass[best], mass[best + 1]) {
        Ok((best, best + 1))
    } else if best > 0 && tied(mass[best - 1], mass[best]) {
        Ok((best - 1, best))
    } else {
        Ok((best, best))
    }
}

/// Mode interval of a pmf: the leading mode m_plus is the unique k with
/// f(k-1) <= f(k) > f(k+1), m_minus = m_plus - 1 exactly on a tie.
pub fn mode_of(pmf: &Pmf, tie_tol: f64) -> Result<ModeSummary> {
    if pmf.is_empty() {
        return Err(Error::InvalidArgument("empty pmf".into()));
    }
    if !(tie_tol > 0.0 && tie_tol <= 1e-6) {
        return Err(Error::InvalidArgument(format!(
            "tie_tol = {tie_tol} outside (0, 1e-6]"
        )));
    }
    if pmf.mass.len() == 1 {
        return Ok(ModeSummary {
            m_minus: pmf.shift as i64,
            m_plus: pmf.shift as i64,
            peak: pmf.mass[0],
            twin: false,
            skewness: 1.0,
            degenerate: true,
        });
    }
    let (lo, hi) = mode_indices(&pmf.mass, tie_tol)?;
    let twin = lo != hi;
    let skewness = if twin {
        1.0
    } else {
        skewness_at(&pmf.mass, hi)
    };
    Ok(ModeSummary {
        m_minus: (pmf.shift + lo) as i64,
        m_plus: (pmf.shift + hi) as i64,
        peak: pmf.mass[hi],
        twin,
        skewness,
    degenerate: false,
    })
}

fn at(mass: &[f64], j: i64) -> f64 {
    if j < 0 || j as usize >= mass.len() {
        0.0
    } else {
        mass[j as usize]
    }
}

/// gamma* = (f(m) - f(m+1)) / (2 f(m) - f(m-1) - f(m+1)) at the leading mode.
fn skewness_at(mass: &[f64], m: usize) -> f64 {
    let m = m as i64;
    let num = at(mass, m) - at(mass, m + 1);
    let den = 2.0 * at(mass, m) - at(mass, m - 1) - at(mass, m + 1);
    num / den
}

/// Peak skewness: the minimal Bernoulli success probability whose convolution
/// shifts the leading mode up by one. 1 exactly on a twin mode.
pub fn peak_skewness(pmf: &Pmf) -> Result<f64> {
    let summary = mode_of(pmf, DEFAULT_TIE_TOL)?;
    if summary.twin || summary.degenerate {
        return Ok(1.0);
    }
    Ok(skewness_at(&pmf.mass, (summary.m_plus - pmf.shift as i64) as usize))
}

/// Height of the p-independent crossing point of the interpolated shapes of
/// f and its unit shift. Undefined on a twin (flat) top.
pub fn crossing_height(pmf: &Pmf) -> Result<f64> {
    let summary = mode_of(pmf, DEFAULT_TIE_TOL)?;
    if summary.twin || summary.degenerate {
        return Err(Error::FlatTop);
    }
    let m = summary.m_plus - pmf.shift as i64;
    if pmf.mass.len() < 2 {
        return Err(Error::FlatTop);
    }
    let (fm, fl, fr) = (at(&pmf.mass, m), at(&pmf.mass, m - 1), at(&pmf.mass, m + 1));
    let den = 2.0 * fm - fl - fr;
    if den <= 0.0 {
        return Err(Error::FlatTop);
    }
    Ok((fm * fm - fl * fr) / den)
}

/// Peak height of S + Bernoulli(p) without forming the convolution: the new
/// peak sits at m or m+1, whichever convex combination is larger. Equal to
/// the old peak for every p when the mode of S is twin.
pub fn peak_after_bernoulli(pmf: &Pmf, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [0,1]")));
    }
    let summary = mode_of(pmf, DEFAULT_TIE_TOL)?;
    let m = summary.m_plus - pmf.shift as i64;
    let f_new = |k: i64| p * at(&pmf.mass, k - 1) + (1.0 - p) * at(&pmf.mass, k);
    Ok(f_new(m).max(f_new(m + 1)))
}

/// Integer interval of medians: lo is the least k with P[S <= k] >= 1/2,
/// hi the greatest k with P[S >= k] >= 1/2.
pub fn median_interval(pmf: &Pmf) -> Result<MedianInterval> {
    if pmf.is_empty() {
        return Err(Error::InvalidArgument("empty pmf".into()));
    }
    let total = pmf.total();
    let half = total / 2.0;
    let tol = 1e-12 * total;
    let mut acc = 0.0;
    let mut lo = pmf.mass.len() - 1;
    for (j, &v) in pmf.mass.iter().enumerate() {
        acc += v;
        if acc >= half - tol {
            lo = j;
            break;
        }
    }
    let mut acc = 0.0;
    let mut hi = 0;
    for j in (0..pmf.mass.len()).rev() {
        acc += pmf.mass[j];
        if acc >= half - tol {
            hi = j;
            break;
        }
    }
    Ok(MedianInterval {
        lo: (pmf.shift + lo) as i64,
        hi: (pmf.shift + hi) as i64,
    })
}

/// Sign of the peak-height derivative in the i-th success probability,
/// classified from the mode of the leave-one-out profile: single mode one
/// below the full leading mode means increasing, single mode at it means
/// decreasing, twin straddling means stationary.
pub fn peak_derivative_class(profile: &Profile, i: usize) -> Result<PeakDerivative> {
    if i >= profile.probs.len() {
        return Err(Error::InvalidArgument(format!(
            "coordinate {i} out of range for {} components",
            profile.probs.len()
        )));
    }
    if !profile.is_finitary() {
        return Err(Error::InvalidArgument(
            "classification requires a finitary profile".into(),
        ));
    }
    let full = mode_of(&pmf_dp(profile, DEFAULT_EPS)?, DEFAULT_TIE_TOL)?;
    let k = full.m_plus;
    let loo = mode_of(&pmf_dp(&profile.without(i), DEFAULT_EPS)?, DEFAULT_TIE_TOL)?;
    if loo.twin && loo.m_plus == k {
        Ok(PeakDerivative::Stationary)
    } else if !loo.twin && loo.m_plus == k - 1 {
        Ok(PeakDerivative::Increasing)
    } else if !loo.twin && loo.m_plus == k {
        Ok(PeakDerivative::Decreasing)
    } else {
        Err(Error::Internal(format!(
            "leave-one-out mode [{}, {}] incompatible with leading mode {k}",
            loo.m_minus, loo.m_plus
        )))
    }
}
