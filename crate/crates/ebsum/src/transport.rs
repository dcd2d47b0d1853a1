//! Minimal-mean independent additive deformations shifting the leading mode
//! up by one: two-point plans, one- and two-Bernoulli plans, and the Poisson
//! closed form.

use serde::{Deserialize, Serialize};

use crate::ebs_core::{add_bernoulli, pmf_dp, Pmf, Profile};
use crate::modal_analysis::mode_of;
use crate::{Error, Result, DEFAULT_EPS, DEFAULT_TIE_TOL};

/// Additive deformation with its mean cost and the achieved balance residual
/// |f(m) - f(m+1)| / f(m) after applying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransportPlan {
    /// Z = s with probability delta, else 0.
    TwoPoint {
        s: u64,
        delta: f64,
        cost: f64,
        balance_residual: f64,
    },
    /// Z = Bernoulli(gamma).
    OneBernoulli {
        gamma: f64,
        cost: f64,
        balance_residual: f64,
    },
    /// Z = Bernoulli(alpha1) + Bernoulli(alpha2).
    TwoBernoulli {
        alpha1: f64,
        alpha2: f64,
        cost: f64,
        balance_residual: f64,
    },
    /// Z = Poisson(rate).
    Poisson {
        rate: f64,
        cost: f64,
        balance_residual: f64,
    },
}

impl TransportPlan {
    pub fn cost(&self) -> f64 {
        match *self {
            TransportPlan::TwoPoint { cost, .. }
            | TransportPlan::OneBernoulli { cost, .. }
            | TransportPlan::TwoBernoulli { cost, .. }
            | TransportPlan::Poisson { cost, .. } => cost,
        }
    }

    pub fn balance_residual(&self) -> f64 {
        match *self {
            TransportPlan::TwoPoint {
                balance_residual, ..
            }
            | TransportPlan::OneBernoulli {
                balance_residual, ..
            }
            | TransportPlan::TwoBernoulli {
                balance_residual, ..
            }
            | TransportPlan::Poisson {
                balance_residual, ..
            } => balance_residual,
        }
    }
}

/// Leading mode as a window index, with the twin flag.
fn leading(pmf: &Pmf) -> Result<(i64, bool)> {
    let m = mode_of(pmf, DEFAULT_TIE_TOL)?;
    Ok((m.m_plus - pmf.shift as i64, m.twin))
}

/// Finite differences at the leading mode m, in the convention that makes
/// the balance equation C + (a1+a2) B + a1 a2 A = 0 hold for the deformation
/// by two Bernoulli variables: C = f(m) - f(m+1) > 0,
/// B = f(m+1) - 2 f(m) + f(m-1) < 0,
/// A = 3 f(m) - f(m+1) - 3 f(m-1) + f(m-2).
pub fn abc_coefficients(pmf: &Pmf) -> Result<(f64, f64, f64)> {
    let (m, twin) = leading(pmf)?;
    if twin {
        return Err(Error::InvalidArgument(
            "twin mode: balance already holds, coefficients degenerate".into(),
        ));
    }
    let f = |j: i64| pmf.local(j);
    let c = f(m) - f(m + 1);
    let b = f(m + 1) - 2.0 * f(m) + f(m - 1);
    let a = 3.0 * f(m) - f(m + 1) - 3.0 * f(m - 1) + f(m - 2);
    if !(c > 0.0 && b < 0.0) {
        return Err(Error::Internal(format!(
            "sign contract violated at the mode: C = {c}, B = {b}"
        )));
    }
    Ok((a, b, c))
}

/// Applies the two-point deformation P[Z=s] = delta to the pmf.
pub fn apply_two_point(pmf: &Pmf, s: u64, delta: f64) -> Pmf {
    let mut mass = vec![0.0; pmf.mass.len() + s as usize];
    for (j, &v) in pmf.mass.iter().enumerate() {
        mass[j] += (1.0 - delta) * v;
        mass[j + s as usize] += delta * v;
    }
    Pmf {
        shift: pmf.shift,
        mass,
        trunc_err: pmf.trunc_err,
    }
}

fn balance_residual_at(pmf: &Pmf, m: i64) -> f64 {
    let fm = pmf.local(m);
    (fm - pmf.local(m + 1)).abs() / fm
}

/// Minimal weight delta of the two-point deformation P[Z=s] = delta that
/// balances f(m) = f(m+1): delta = C / (C + f(m-s+1) - f(m-s)). Twin-mode
/// input returns 0.
pub fn delta_for_shift(pmf: &Pmf, s: u64) -> Result<f64> {
    let (m, twin) = leading(pmf)?;
    if twin {
        return Ok(0.0);
    }
    if s == 0 || s as i64 > m + 1 {
        return Err(Error::InvalidArgument(format!(
            "s = {s} outside 1..={}",
            m + 1
        )));
    }
    let f = |j: i64| pmf.local(j);
    let c = f(m) - f(m + 1);
    let rise = f(m - s as i64 + 1) - f(m - s as i64);
    Ok(c / (c + rise))
}

/// Cheapest two-point plan: minimizes s * delta(s) over s = 1..=m+1, ties
/// resolved toward smaller s.
pub fn optimal_two_point(pmf: &Pmf) -> Result<TransportPlan> {
    let (m, twin) = leading(pmf)?;
    if twin {
        return Ok(TransportPlan::TwoPoint {
            s: 1,
            delta: 0.0,
            cost: 0.0,
            balance_residual: balance_residual_at(pmf, m),
        });
    }
    let mut best: Option<(u64, f64, f64)> = None;
    for s in 1..=(m + 1) as u64 {
        let delta = delta_for_shift(pmf, s)?;
        let cost = s as f64 * delta;
        if best.map_or(true, |(_, _, c)| cost < c) {
            best = Some((s, delta, cost));
        }
    }
    let (s, delta, cost) = best.unwrap();
    let deformed = apply_two_point(pmf, s, delta);
    Ok(TransportPlan::TwoPoint {
        s,
        delta,
        cost,
        balance_residual: balance_residual_at(&deformed, m),
    })
}

/// Equal-parameter two-Bernoulli plan from the balance quadratic
/// C + 2 B alpha + A alpha^2 = 0; exists exactly when A < 0, and then beats
/// the single Bernoulli: 2 alpha < gamma*.
pub fn two_bernoulli_plan(pmf: &Pmf) -> Result<TransportPlan> {
    let (m, _) = leading(pmf)?;
    let (a, b, c) = abc_coefficients(pmf)?;
    if a >= 0.0 {
        return Err(Error::NoTwoBernoulliImprovement);
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return Err(Error::Internal("negative discriminant in balance quadratic".into()));
    }
    let alpha = (-b - disc.sqrt()) / a;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Internal(format!("alpha = {alpha} outside (0,1)")));
    }
    let gamma = -c / b;
    if 2.0 * alpha >= gamma {
        return Err(Error::Internal(format!(
            "two-Bernoulli cost 2*{alpha} not below gamma* = {gamma}"
        )));
    }
    // verify via the difference expansion ...
    let f = |j: i64| pmf.local(j);
    let expand = |k: i64| {
        f(k) - 2.0 * alpha * (f(k) - f(k - 1))
            + alpha * alpha * (f(k) - 2.0 * f(k - 1) + f(k - 2))
    };
    let expansion_residual = (expand(m) - expand(m + 1)).abs() / f(m);
    // ... and by direct double convolution
    let deformed = add_bernoulli(&add_bernoulli(pmf, alpha)?, alpha)?;
    let direct = (deformed.local(m) - deformed.local(m + 1)).abs() / deformed.local(m);
    Ok(TransportPlan::TwoBernoulli {
        alpha1: alpha,
        alpha2: alpha,
        cost: 2.0 * alpha,
        balance_residual: expansion_residual.max(direct),
    })
}

/// One-Bernoulli transport for Poisson(t) by the closed form
/// gamma*(t) = ((m+1)t - t^2) / (2(m+1)t - t^2 - m(m+1)) with m = floor(t);
/// integer t is already balanced (cost 0).
pub fn poisson_break(t: f64) -> Result<TransportPlan> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be > 0")));
    }
    if (t - t.round()).abs() <= 1e-12 * t.max(1.0) {
        return Ok(TransportPlan::OneBernoulli {
            gamma: 0.0,
            cost: 0.0,
            balance_residual: 0.0,
        });
    }
    let m = t.floor();
    let gamma = ((m + 1.0) * t - t * t) / (2.0 * (m + 1.0) * t - t * t - m * (m + 1.0));
    if !(gamma < m + 1.0 - t) {
        return Err(Error::Internal(format!(
            "gamma = {gamma} not below the Poisson-rate alternative {}",
            m + 1.0 - t
        )));
    }
    let pmf = pmf_dp(&Profile::finitary(t, vec![])?, DEFAULT_EPS)?;
    let deformed = add_bernoulli(&pmf, gamma)?;
    Ok(TransportPlan::OneBernoulli {
        gamma,
        cost: gamma,
        balance_residual: balance_residual_at(&deformed, m as i64),
    })
}
