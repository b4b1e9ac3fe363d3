//! Limiting laws of the rescaled final state and leading-order asymptotes of
//! its expectations.
//!
//! Regime boundaries (`λ = 1/2`, `λ = (√5−1)/2`, `λ = 1`) are matched with a
//! relative tolerance of `1e-12`; anything else falls in an open regime.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature;

/// The golden-ratio conjugate `(√5 − 1)/2`, where the recovered deficit
/// changes regime.
pub const GOLDEN_THRESHOLD: f64 = 0.618_033_988_749_894_8;

const REGIME_RTOL: f64 = 1e-12;

// Target and failure thresholds for the compound-law quadrature.
const QUAD_ABS_TOL: f64 = 1e-13;
const QUAD_REL_TOL: f64 = 1e-12;
const QUAD_MAX_ERROR: f64 = 1e-10;

// e^{-60} is far below every tolerance used here.
const EXP_CUTOFF: f64 = 60.0;

fn near(lambda: f64, target: f64) -> bool {
    (lambda - target).abs() <= REGIME_RTOL * target
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "lambda must be positive and finite, got {lambda}"
        )))
    }
}

fn check_probability(q: f64) -> Result<()> {
    if (0.0..1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level must lie in [0, 1), got {q}")))
    }
}

fn unit_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Limit of the probability that every susceptible vertex gets infected.
pub fn limiting_extinction_probability(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(if near(lambda, 1.0) {
        0.5
    } else if lambda < 1.0 {
        0.0
    } else {
        1.0
    })
}

// ---------------------------------------------------------------------------
// Powered exponential: the law of E^λ.

pub fn powered_exponential_cdf(x: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x.powf(1.0 / lambda)).exp_m1()
    }
}

pub fn powered_exponential_pdf(x: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let a = 1.0 / lambda;
    a * x.powf(a - 1.0) * (-x.powf(a)).exp()
}

pub fn powered_exponential_quantile(q: f64, lambda: f64) -> Result<f64> {
    check_probability(q)?;
    Ok((-(-q).ln_1p()).powf(lambda))
}

pub fn powered_exponential_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    unit_exp(rng).powf(lambda)
}

// ---------------------------------------------------------------------------
// Geometric laws: G on {0, 1, ...} and G' = G + 1.

/// `P(G = i) = 2^{-(i+1)}`.
pub fn shifted_geometric_pmf(i: i64) -> Result<f64> {
    if i < 0 {
        return Err(Error::Domain(format!("G is supported on i >= 0, got {i}")));
    }
    Ok(0.5f64.powi((i + 1).min(i32::MAX as i64) as i32))
}

/// `P(G' = i) = 2^{-i}`.
pub fn positive_geometric_pmf(i: i64) -> Result<f64> {
    if i < 1 {
        return Err(Error::Domain(format!("G' is supported on i >= 1, got {i}")));
    }
    shifted_geometric_pmf(i - 1)
}

fn shifted_geometric_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0 - 0.5f64.powf(x.floor() + 1.0)
    }
}

fn shifted_geometric_quantile(q: f64) -> f64 {
    let mut i = 0.0;
    while shifted_geometric_cdf(i) < q {
        i += 1.0;
    }
    i
}

fn shifted_geometric_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mut i = 0.0;
    while rng.random::<bool>() {
        i += 1.0;
    }
    i
}

// ---------------------------------------------------------------------------
// Critical mixtures at λ = 1.

/// CDF of `½δ₁ + (1+x)^{-2} dx` on `[0, 1]`.
pub fn critical_r_mixture_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x < 1.0 {
        x / (1.0 + x)
    } else {
        1.0
    }
}

fn critical_r_mixture_cdf_left(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= 1.0 {
        x / (1.0 + x)
    } else {
        1.0
    }
}

/// CDF of `½δ₀ + (2−x)^{-2} dx` on `[0, 1]`. The atom at zero carries the
/// mass of runs where the infection dies out.
pub fn critical_i_law_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x <= 1.0 {
        1.0 / (2.0 - x)
    } else {
        1.0
    }
}

fn critical_i_law_cdf_left(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        critical_i_law_cdf(x)
    }
}

// ---------------------------------------------------------------------------
// Compound exponential: Exp with rate E^{1/λ}, E a unit exponential.

/// `∫₀^∞ y^{k/λ} e^{-y - y^{1/λ} u} dy` for `k ∈ {0, 1}`.
///
/// For `λ > 1` the integrand has an unbounded derivative at the origin, so
/// the integral is taken in `t = y^{1/λ}` instead. Breakpoints bracket the
/// scale on which `e^{-y^{1/λ} u}` decays.
fn compound_kernel(u: f64, lambda: f64, k: i32) -> Result<f64> {
    let est = if lambda > 1.0 {
        let t_max = EXP_CUTOFF.powf(1.0 / lambda);
        let mut points = vec![0.0];
        if u > 0.0 {
            points.extend([0.1, 1.0, 10.0, 100.0].iter().map(|c| c / u).filter(|&t| t < t_max));
        }
        points.extend([1.0f64.min(t_max), t_max]);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let kk = k as f64;
        quadrature::integrate(
            |t: f64| {
                if t == 0.0 {
                    return 0.0;
                }
                lambda * t.powf(lambda - 1.0 + kk) * (-t.powf(lambda) - t * u).exp()
            },
            &points,
            QUAD_ABS_TOL,
            QUAD_REL_TOL,
        )
    } else {
        let mut points = vec![0.0];
        if u > 0.0 {
            let scale = u.powf(-lambda);
            points.extend(
                [0.1, 1.0, 10.0, 100.0]
                    .iter()
                    .map(|c| c * scale)
                    .filter(|&y| y < EXP_CUTOFF),
            );
        }
        points.extend([1.0, EXP_CUTOFF]);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let a = 1.0 / lambda;
        let ka = k as f64 * a;
        quadrature::integrate(
            |y: f64| {
                let ya = y.powf(a);
                let pre = if k == 0 { 1.0 } else { y.powf(ka) };
                pre * (-y - ya * u).exp()
            },
            &points,
            QUAD_ABS_TOL,
            QUAD_REL_TOL,
        )
    };
    if est.error > QUAD_MAX_ERROR || !est.value.is_finite() {
        return Err(Error::Quadrature {
            estimate: est.value,
            error: est.error,
        });
    }
    Ok(est.value)
}

fn check_compound(u: f64, lambda: f64) -> Result<()> {
    check_lambda(lambda)?;
    if u.is_nan() {
        return Err(Error::Domain("u is NaN".into()));
    }
    Ok(())
}

/// Survival function `P(V > u)`.
pub fn compound_exponential_sf(u: f64, lambda: f64) -> Result<f64> {
    check_compound(u, lambda)?;
    if u <= 0.0 {
        return Ok(1.0);
    }
    if u.is_infinite() {
        return Ok(0.0);
    }
    compound_kernel(u, lambda, 0).map(|v| v.clamp(0.0, 1.0))
}

pub fn compound_exponential_cdf(u: f64, lambda: f64) -> Result<f64> {
    compound_exponential_sf(u, lambda).map(|sf| 1.0 - sf)
}

pub fn compound_exponential_pdf(u: f64, lambda: f64) -> Result<f64> {
    check_compound(u, lambda)?;
    if u < 0.0 || u.is_infinite() {
        return Ok(0.0);
    }
    compound_kernel(u, lambda, 1)
}

/// Generalized inverse of the CDF by bisection.
pub fn compound_exponential_quantile(q: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_probability(q)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while compound_exponential_cdf(hi, lambda)? < q {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Domain(format!("quantile {q} out of floating-point range")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if mid <= lo || mid >= hi {
            break;
        }
        if compound_exponential_cdf(mid, lambda)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

pub fn compound_exponential_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let rate = unit_exp(rng).powf(1.0 / lambda);
    unit_exp(rng) / rate
}

/// `E[V^s] = Γ(1+s)·Γ(1−s/λ)` for `−1 < s < λ`.
pub fn compound_exponential_moment(s: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(s > -1.0 && s < lambda) {
        return Err(Error::Domain(format!(
            "moment order must lie in (-1, {lambda}), got {s}"
        )));
    }
    Ok(gamma(1.0 + s) * gamma(1.0 - s / lambda))
}

/// `∫₀^∞ P(V > u) du`, computed from the quadrature survival function.
///
/// The tail `[1, ∞)` is mapped onto `(0, 1]` by `u = w^{-2}`. Finite only
/// for `λ > 1`.
pub fn compound_exponential_numeric_mean(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda <= 1.0 {
        return Err(Error::Domain(format!(
            "the compound law has infinite mean for lambda = {lambda} <= 1"
        )));
    }
    let failure = std::cell::Cell::new(None);
    let sf = |u: f64| match compound_exponential_sf(u, lambda) {
        Ok(v) => v,
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    let head = quadrature::integrate(sf, &[0.0, 0.25, 1.0], 1e-12, 1e-11);
    let tail = quadrature::integrate(
        |w: f64| {
            if w == 0.0 {
                return 0.0;
            }
            sf(w.powi(-2)) * 2.0 * w.powi(-3)
        },
        &[0.0, 0.1, 0.5, 1.0],
        1e-12,
        1e-11,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let value = head.value + tail.value;
    let error = head.error + tail.error;
    if error > 1e-8 * value.abs() {
        return Err(Error::Quadrature { estimate: value, error });
    }
    Ok(value)
}

/// Leading-order tail `Γ(λ+1)·u^{-λ}`; an asymptote, not the exact tail.
pub fn compound_exponential_tail_asymptote(u: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if u.is_nan() || u <= 0.0 {
        return Err(Error::Domain(format!("u must be positive, got {u}")));
    }
    Ok(gamma(lambda + 1.0) * u.powf(-lambda))
}

// ---------------------------------------------------------------------------
// Unified interface.

/// One of the limiting distributions of the rescaled final state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LimitLaw {
    /// `E^λ` with `E` a unit exponential.
    PoweredExponential { lambda: f64 },
    /// `P(G = i) = 2^{-(i+1)}`, `i ≥ 0`.
    ShiftedGeometric,
    /// `P(G' = i) = 2^{-i}`, `i ≥ 1`.
    PositiveGeometric,
    /// `½δ₁ + (1+x)^{-2} dx` on `[0, 1]`.
    CriticalRMixture,
    /// `½δ₀ + (2−x)^{-2} dx` on `[0, 1]`.
    CriticalILaw,
    /// Exponential with independent rate `E^{1/λ}`.
    CompoundExponential { lambda: f64 },
}

impl LimitLaw {
    pub fn powered_exponential(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self::PoweredExponential { lambda })
    }

    pub fn compound_exponential(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self::CompoundExponential { lambda })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PoweredExponential { .. } => "powered-exp",
            Self::ShiftedGeometric => "geometric",
            Self::PositiveGeometric => "geometric-positive",
            Self::CriticalRMixture => "critical-r",
            Self::CriticalILaw => "critical-i",
            Self::CompoundExponential { .. } => "compound",
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::ShiftedGeometric | Self::PositiveGeometric)
    }

    /// Right-continuous distribution function.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Self::PoweredExponential { lambda } => powered_exponential_cdf(x, lambda),
            Self::ShiftedGeometric => shifted_geometric_cdf(x),
            Self::PositiveGeometric => shifted_geometric_cdf(x - 1.0),
            Self::CriticalRMixture => critical_r_mixture_cdf(x),
            Self::CriticalILaw => critical_i_law_cdf(x),
            Self::CompoundExponential { lambda } => return compound_exponential_cdf(x, lambda),
        })
    }

    /// Left limit `F(x-)`.
    pub fn cdf_left(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Self::ShiftedGeometric => shifted_geometric_cdf(x.ceil() - 1.0),
            Self::PositiveGeometric => shifted_geometric_cdf(x.ceil() - 2.0),
            Self::CriticalRMixture => critical_r_mixture_cdf_left(x),
            Self::CriticalILaw => critical_i_law_cdf_left(x),
            _ => return self.cdf(x),
        })
    }

    /// Density of the continuous part, or the mass function for the
    /// geometric laws.
    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Self::PoweredExponential { lambda } => powered_exponential_pdf(x, lambda),
            Self::ShiftedGeometric | Self::PositiveGeometric => {
                if x.fract() != 0.0 {
                    return Err(Error::Domain(format!("{x} is not an integer")));
                }
                let i = x as i64;
                if *self == Self::ShiftedGeometric {
                    shifted_geometric_pmf(i)?
                } else {
                    positive_geometric_pmf(i)?
                }
            }
            Self::CriticalRMixture => {
                if (0.0..1.0).contains(&x) {
                    (1.0 + x).powi(-2)
                } else {
                    0.0
                }
            }
            Self::CriticalILaw => {
                if (0.0..=1.0).contains(&x) {
                    (2.0 - x).powi(-2)
                } else {
                    0.0
                }
            }
            Self::CompoundExponential { lambda } => return compound_exponential_pdf(x, lambda),
        })
    }

    /// Generalized inverse `inf{x : F(x) >= q}`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        Ok(match *self {
            Self::PoweredExponential { lambda } => return powered_exponential_quantile(q, lambda),
            Self::ShiftedGeometric => shifted_geometric_quantile(q),
            Self::PositiveGeometric => shifted_geometric_quantile(q) + 1.0,
            Self::CriticalRMixture => {
                if q < 0.5 {
                    q / (1.0 - q)
                } else {
                    1.0
                }
            }
            Self::CriticalILaw => {
                if q <= 0.5 {
                    0.0
                } else {
                    2.0 - 1.0 / q
                }
            }
            Self::CompoundExponential { lambda } => return compound_exponential_quantile(q, lambda),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::PoweredExponential { lambda } => powered_exponential_sample(lambda, rng),
            Self::ShiftedGeometric => shifted_geometric_sample(rng),
            Self::PositiveGeometric => shifted_geometric_sample(rng) + 1.0,
            Self::CriticalRMixture | Self::CriticalILaw => {
                let q: f64 = Open01.sample(rng);
                self.quantile(q).expect("q in (0, 1)")
            }
            Self::CompoundExponential { lambda } => compound_exponential_sample(lambda, rng),
        }
    }

    /// Expectation; infinite for the compound law when `λ <= 1`.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::PoweredExponential { lambda } => gamma(1.0 + lambda),
            Self::ShiftedGeometric => 1.0,
            Self::PositiveGeometric => 2.0,
            Self::CriticalRMixture => LN_2,
            Self::CriticalILaw => 1.0 - LN_2,
            Self::CompoundExponential { lambda } => {
                if lambda > 1.0 {
                    gamma(1.0 - 1.0 / lambda)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Expectation asymptotes.

/// Final-state quantities with a known leading-order expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalQuantity {
    /// Remaining susceptible count `S`.
    S,
    /// `N − R`.
    RDeficit,
    /// Final infected count `I`.
    I,
    /// `N − I`.
    IDeficit,
    /// Final recovered count `R`.
    R,
}

impl FinalQuantity {
    pub const ALL: [FinalQuantity; 5] = [Self::S, Self::RDeficit, Self::I, Self::IDeficit, Self::R];

    pub fn column_suffix(&self) -> &'static str {
        match self {
            Self::S => "E_S",
            Self::RDeficit => "N_minus_E_R",
            Self::I => "E_I",
            Self::IDeficit => "N_minus_E_I",
            Self::R => "E_R",
        }
    }
}

/// A leading-order value together with the regime it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub value: f64,
    pub regime: &'static str,
}

/// Leading-order expectation of `quantity` at `(λ, N)`.
///
/// Where the leading term is the trivial bound `N` (for instance `E[R]`
/// below criticality), that bound is returned with a regime label saying so.
pub fn expected_final_count_asymptote(quantity: FinalQuantity, lambda: f64, n: u64) -> Result<Asymptote> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    let nf = n as f64;
    let at_one = near(lambda, 1.0);
    let at_half = near(lambda, 0.5);
    let at_golden = near(lambda, GOLDEN_THRESHOLD);
    let sub = lambda < 1.0 && !at_one;
    let gamma_lambda = gamma(lambda + 1.0);
    let inv_gamma = |l: f64| gamma(1.0 + 1.0 / l);
    let super_r = |l: f64| gamma(1.0 - 1.0 / l) * nf.powf(1.0 / l);
    let a = |value: f64, regime: &'static str| Ok(Asymptote { value, regime });

    match quantity {
        FinalQuantity::S => {
            if at_one {
                a(2.0, "lambda=1")
            } else if sub {
                a(gamma_lambda * nf.powf(1.0 - lambda), "lambda<1")
            } else {
                a(1.0 / lambda, "lambda>1")
            }
        }
        FinalQuantity::RDeficit => {
            if at_one {
                a((1.0 - LN_2) * nf, "lambda=1")
            } else if !sub {
                a(nf - super_r(lambda), "lambda>1 (N minus E[R])")
            } else if at_golden {
                let l = GOLDEN_THRESHOLD;
                let value = (0.5 * inv_gamma(l) + gamma(l + 1.0)) * nf.powf((3.0 - 5f64.sqrt()) / 2.0);
                a(value, "lambda=(sqrt5-1)/2")
            } else if lambda < GOLDEN_THRESHOLD {
                a(gamma_lambda * nf.powf(1.0 - lambda), "lambda<(sqrt5-1)/2")
            } else {
                a(0.5 * inv_gamma(lambda) * nf.powf(2.0 - 1.0 / lambda), "(sqrt5-1)/2<lambda<1")
            }
        }
        FinalQuantity::I => {
            if at_one {
                a((1.0 - LN_2) * nf, "lambda=1")
            } else if !sub {
                a(nf - super_r(lambda), "lambda>1 (N minus N-E[I])")
            } else if at_half {
                a(1.0, "lambda=1/2")
            } else if lambda < 0.5 {
                a(0.0, "lambda<1/2")
            } else {
                a(0.5 * inv_gamma(lambda) * nf.powf(2.0 - 1.0 / lambda), "1/2<lambda<1")
            }
        }
        FinalQuantity::IDeficit => {
            if at_one {
                a(LN_2 * nf, "lambda=1")
            } else if sub {
                Err(Error::UndefinedRegime(format!(
                    "N - E[I] has no separate asymptote for lambda = {lambda} < 1; use E[I]"
                )))
            } else {
                a(super_r(lambda), "lambda>1")
            }
        }
        FinalQuantity::R => {
            if at_one {
                a(LN_2 * nf, "lambda=1")
            } else if sub {
                Err(Error::UndefinedRegime(format!(
                    "E[R] has no separate asymptote for lambda = {lambda} < 1; use N - E[R]"
                )))
            } else {
                a(super_r(lambda), "lambda>1")
            }
        }
    }
}

/// `Γ(1+1/λ)·N^{1−1/λ}`, clipped at 1, for `0 < λ < 1`.
pub fn race_probability_asymptote(lambda: f64, n: u64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda >= 1.0 {
        return Err(Error::Domain(format!(
            "race asymptote needs 0 < lambda < 1, got {lambda}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    Ok((gamma(1.0 + 1.0 / lambda) * (n as f64).powf(1.0 - 1.0 / lambda)).min(1.0))
}
