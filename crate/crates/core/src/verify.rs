//! Named statistical checks comparing simulations with exact and limiting
//! values.
//!
//! Every check derives its seed from the suite seed and its own name, so a
//! check gives the same result whether it runs alone or inside the suite,
//! and regardless of the worker count.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::Result;
use crate::limits::{self, LimitLaw};
use crate::montecarlo::{
    estimate_means_tilted, race_frequency, run_replicas, sweep, Count, EnsembleConfig, EnsembleSummary, Sampler,
    ScaledQuantity,
};
use crate::process::{exact_absorption_law, exact_extinction_probability, ProcessParams, StateCounts};
use crate::stats::{
    chi_square_gof, ks_critical_one_sample, ks_one_sample, ks_one_sample_with_atoms, ks_two_sample, log_log_slope,
    tv_distance_discrete, EmpiricalSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Small-`N` oracle comparisons and limit-law self-tests.
    Quick,
    /// Everything, including the large-`N` limit checks.
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Self::Quick),
            "full" => Ok(Self::Full),
            _ => Err(crate::Error::InvalidParams(format!("unknown level {s:?}"))),
        }
    }
}

/// The pass condition of a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    /// `measured < limit`
    Below { limit: f64 },
    /// `measured > limit`
    Above { limit: f64 },
    /// `|measured − center| <= tolerance`
    Within { center: f64, tolerance: f64 },
    /// `low <= measured <= high`
    Range { low: f64, high: f64 },
}

impl Bound {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Self::Below { limit } => x < limit,
            Self::Above { limit } => x > limit,
            Self::Within { center, tolerance } => (x - center).abs() <= tolerance,
            Self::Range { low, high } => low <= x && x <= high,
        }
    }

    /// Same bound in relative form: `|x − c| <= rel·|c|`.
    pub fn relative(center: f64, rel: f64) -> Self {
        Self::Within {
            center,
            tolerance: rel * center.abs(),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Below { limit } => write!(f, "< {limit}"),
            Self::Above { limit } => write!(f, "> {limit}"),
            Self::Within { center, tolerance } => write!(f, "{center} ± {tolerance}"),
            Self::Range { low, high } => write!(f, "in [{low}, {high}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: Option<Bound>,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, measured: f64, bound: Bound, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: bound.holds(measured),
            measured,
            bound: Some(bound),
            detail: detail.into(),
        }
    }

    fn error(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            measured: f64::NAN,
            bound: None,
            detail: format!("error: {err}"),
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        match &self.bound {
            Some(b) => write!(f, "{verdict} {}: {} (want {b})", self.name, self.measured)?,
            None => write!(f, "{verdict} {}", self.name)?,
        }
        if !self.detail.is_empty() {
            write!(f, " [{}]", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.failures() == 0
    }
}

pub const QUICK_CHECKS: [&str; 5] = ["eq-t1", "oracle-tv", "sampler-ks", "estimator-sanity", "limit-law-self"];

pub const FULL_CHECKS: [&str; 13] = [
    "eq-t1",
    "oracle-tv",
    "sampler-ks",
    "estimator-sanity",
    "limit-law-self",
    "critical-extinction",
    "critical-geometric",
    "powered-exp-scaling",
    "critical-r-mixture",
    "compound-exp",
    "moment-asymptotics",
    "outbreak-power-law",
    "race-slope",
];

pub fn check_names(level: Level) -> &'static [&'static str] {
    match level {
        Level::Quick => &QUICK_CHECKS,
        Level::Full => &FULL_CHECKS,
    }
}

/// Runs every check of `level`.
pub fn verify_suite(level: Level, seed: u64, workers: usize) -> Report {
    let checks = check_names(level)
        .iter()
        .flat_map(|name| run_check(name, seed, workers))
        .collect();
    Report { level, seed, checks }
}

/// Runs one named check. Unknown names and internal errors produce a
/// failed outcome rather than an error.
pub fn run_check(name: &str, seed: u64, workers: usize) -> Vec<CheckOutcome> {
    let ctx = Ctx {
        seed: check_seed(seed, name),
        workers,
    };
    let result = match name {
        "eq-t1" => eq_t1(&ctx),
        "oracle-tv" => oracle_tv(&ctx),
        "sampler-ks" => sampler_ks(&ctx),
        "estimator-sanity" => estimator_sanity(&ctx),
        "limit-law-self" => limit_law_self(&ctx),
        "critical-extinction" => critical_extinction(&ctx),
        "critical-geometric" => critical_geometric(seed, workers),
        "powered-exp-scaling" => powered_exp_scaling(&ctx),
        "critical-r-mixture" => critical_r_mixture(seed, workers),
        "compound-exp" => compound_exp(&ctx),
        "moment-asymptotics" => moment_asymptotics(&ctx),
        "outbreak-power-law" => outbreak_power_law(&ctx),
        "race-slope" => race_slope(&ctx),
        _ => Err(crate::Error::InvalidParams(format!("unknown check {name:?}"))),
    };
    result.unwrap_or_else(|e| vec![CheckOutcome::error(name, e)])
}

/// FNV-1a of the name mixed into the suite seed.
fn check_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

struct Ctx {
    seed: u64,
    workers: usize,
}

impl Ctx {
    fn ensemble(&self, n: u64, lambda: f64, replicas: u64, sampler: Sampler, salt: u64) -> Result<EnsembleSummary> {
        let params = ProcessParams::new(n, lambda)?;
        run_replicas(&EnsembleConfig {
            params,
            replicas,
            sampler,
            master_seed: self.seed.wrapping_add(salt),
            workers: self.workers,
        })
    }
}

fn tv_against_exact(summary: &EnsembleSummary) -> Result<f64> {
    let exact = exact_absorption_law(&summary.params)?;
    let q: BTreeMap<StateCounts, f64> = exact.support.into_iter().filter(|(_, p)| *p > 0.0).collect();
    tv_distance_discrete(&summary.law_frequencies(), &q)
}

fn eq_t1(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (k, (n, lambda)) in [(50u64, 1.7), (7, 0.3)].into_iter().enumerate() {
        let params = ProcessParams::new(n, lambda)?;
        let exact = 1.0 / (lambda * n as f64 + 1.0);
        let law = exact_absorption_law(&params)?;
        let mass = law.probability_of(StateCounts::new(n, 0, 2));
        out.push(CheckOutcome::new(
            format!("eq-t1 dp n={n} lambda={lambda}"),
            mass,
            Bound::Within {
                center: exact,
                tolerance: 1e-12,
            },
            "mass of (N,0,2) in the exact law vs 1/(lambda N + 1)",
        ));
        let m = 100_000;
        let summary = ctx.ensemble(n, lambda, m, Sampler::JumpChain, k as u64)?;
        let hits = summary.final_law.get(&StateCounts::new(n, 0, 2)).copied().unwrap_or(0);
        let freq = hits as f64 / m as f64;
        let se = (exact * (1.0 - exact) / m as f64).sqrt();
        out.push(CheckOutcome::new(
            format!("eq-t1 empirical n={n} lambda={lambda}"),
            freq,
            Bound::Within {
                center: exact,
                tolerance: 4.0 * se,
            },
            format!("exact 1/(lambda N + 1) = {exact}; {m} jump-chain replicas, 4 standard errors"),
        ));
    }
    Ok(out)
}

fn oracle_tv(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (k, lambda) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        for (j, sampler) in Sampler::ALL.into_iter().enumerate() {
            let summary = ctx.ensemble(20, lambda, 100_000, sampler, (3 * k + j) as u64)?;
            out.push(CheckOutcome::new(
                format!("oracle-tv n=20 lambda={lambda} sampler={}", sampler.as_str()),
                tv_against_exact(&summary)?,
                Bound::Below { limit: 0.03 },
                "TV between 1e5-replica empirical law and the exact law",
            ));
        }
    }
    Ok(out)
}

fn final_r_samples(ctx: &Ctx, n: u64, lambda: f64, m: u64, salt: u64) -> Result<Vec<(Sampler, EmpiricalSummary)>> {
    Sampler::ALL
        .into_iter()
        .enumerate()
        .map(|(j, sampler)| {
            let s = ctx.ensemble(n, lambda, m, sampler, salt + j as u64)?;
            let rs = s
                .marginal(Count::R)
                .into_iter()
                .flat_map(|(r, c)| std::iter::repeat_n(r as f64, c as usize))
                .collect();
            Ok((sampler, EmpiricalSummary::new(rs)))
        })
        .collect()
}

fn sampler_ks(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let m = 10_000;
    let critical = 0.0231;
    let mut out = Vec::new();
    let mut grid = vec![(100u64, 1.2)];
    // Oracle-scale points as well.
    grid.extend([(20, 0.5), (20, 1.0), (20, 1.5)]);
    for (k, (n, lambda)) in grid.into_iter().enumerate() {
        let samples = final_r_samples(ctx, n, lambda, m, 10 * k as u64)?;
        for a in 0..3 {
            for b in (a + 1)..3 {
                out.push(CheckOutcome::new(
                    format!(
                        "sampler-ks n={n} lambda={lambda} {}-{}",
                        samples[a].0.as_str(),
                        samples[b].0.as_str()
                    ),
                    ks_two_sample(&samples[a].1, &samples[b].1),
                    Bound::Below { limit: critical },
                    "two-sample KS on final r, 1e4 each; 1.628*sqrt(2/1e4)",
                ));
            }
        }
    }
    Ok(out)
}

fn estimator_sanity(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let m = 10_000u64;
    let mut out = Vec::new();
    let mut salt = 0;
    for n in [1u64, 2, 5, 20] {
        for lambda in [0.5, 1.0, 2.0] {
            let sampler = Sampler::ALL[salt as usize % 3];
            let s = ctx.ensemble(n, lambda, m, sampler, salt)?;
            salt += 1;
            let p = exact_extinction_probability(&s.params)?;
            let freq = s.extinction_frequency();
            let se = (freq * (1.0 - freq) / m as f64).sqrt();
            out.push(CheckOutcome::new(
                format!("estimator-sanity n={n} lambda={lambda} sampler={}", sampler.as_str()),
                freq,
                Bound::Within {
                    center: p,
                    tolerance: 4.0 * se,
                },
                "extinction frequency ± 4 standard errors must bracket the exact probability",
            ));
        }
    }
    Ok(out)
}

fn limit_law_self(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let n = 100_000u64;
    // Each law draws from its own stream.
    let rng_for = |law: &LimitLaw| ChaCha8Rng::seed_from_u64(check_seed(ctx.seed, &describe(law)));
    let mut out = Vec::new();
    let continuous = [
        LimitLaw::powered_exponential(0.5)?,
        LimitLaw::powered_exponential(2.0)?,
        LimitLaw::CriticalRMixture,
        LimitLaw::CriticalILaw,
        LimitLaw::compound_exponential(2.0)?,
    ];
    for law in continuous {
        let mut rng = rng_for(&law);
        let sample = EmpiricalSummary::new((0..n).map(|_| law.sample(&mut rng)).collect());
        let failure = Cell::new(None);
        let d = ks_one_sample_with_atoms(
            &sample,
            |x| {
                law.cdf(x).unwrap_or_else(|e| {
                    failure.set(Some(e));
                    f64::NAN
                })
            },
            |x| law.cdf_left(x).unwrap_or(f64::NAN),
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        out.push(CheckOutcome::new(
            format!("limit-law-self ks {}", describe(&law)),
            d,
            Bound::Below {
                limit: ks_critical_one_sample(n as usize),
            },
            "one-sample KS of 1e5 draws against the law's own CDF",
        ));
    }
    for law in [LimitLaw::ShiftedGeometric, LimitLaw::PositiveGeometric] {
        let offset = if law == LimitLaw::ShiftedGeometric { 0 } else { 1 };
        let mut rng = rng_for(&law);
        let cells = 20usize;
        let mut counts = vec![0u64; cells + 1];
        for _ in 0..n {
            let k = law.sample(&mut rng) as usize - offset;
            counts[k.min(cells)] += 1;
        }
        let mut probs: Vec<f64> = (0..cells)
            .map(|k| law.density((k + offset) as f64))
            .collect::<Result<_>>()?;
        probs.push(1.0 - probs.iter().sum::<f64>());
        let chi = chi_square_gof(&counts, &probs, n)?;
        out.push(CheckOutcome::new(
            format!("limit-law-self chi2 {}", describe(&law)),
            chi.p_value(),
            Bound::Above { limit: 0.001 },
            format!(
                "chi-square p-value on the first {cells} support points plus tail; statistic {} on {} dof",
                chi.statistic, chi.dof
            ),
        ));
    }
    for lambda in [1.5, 2.0, 3.0] {
        let closed = limits::compound_exponential_moment(1.0, lambda)?;
        let numeric = limits::compound_exponential_numeric_mean(lambda)?;
        out.push(CheckOutcome::new(
            format!("limit-law-self compound mean lambda={lambda}"),
            numeric / closed - 1.0,
            Bound::Within {
                center: 0.0,
                tolerance: 1e-6,
            },
            format!("relative gap between tail-integral mean {numeric} and moment formula {closed}"),
        ));
    }
    Ok(out)
}

fn describe(law: &LimitLaw) -> String {
    match law {
        LimitLaw::PoweredExponential { lambda } | LimitLaw::CompoundExponential { lambda } => {
            format!("{} lambda={lambda}", law.name())
        }
        _ => law.name().to_string(),
    }
}

fn critical_extinction(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let cases = [
        (1.0, Bound::Range { low: 0.47, high: 0.53 }),
        (0.5, Bound::Below { limit: 0.05 }),
        (2.0, Bound::Above { limit: 0.95 }),
    ];
    let mut out = Vec::new();
    for (k, (lambda, bound)) in cases.into_iter().enumerate() {
        let s = ctx.ensemble(10_000, lambda, 10_000, Sampler::PoissonEmbedding, k as u64)?;
        out.push(CheckOutcome::new(
            format!("critical-extinction lambda={lambda}"),
            s.extinction_frequency(),
            bound,
            format!(
                "N=1e4, 1e4 Poisson-embedding replicas; limit {}",
                limits::limiting_extinction_probability(lambda)?
            ),
        ));
    }
    Ok(out)
}

/// The λ = 1, N = 1e4, 1e5-replica ensemble shared by two checks.
fn critical_ensemble(seed: u64, workers: usize) -> Result<Arc<EnsembleSummary>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<EnsembleSummary>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
    if let Some(s) = guard.get(&seed) {
        return Ok(Arc::clone(s));
    }
    let ctx = Ctx {
        seed: check_seed(seed, "critical-ensemble"),
        workers,
    };
    let s = Arc::new(ctx.ensemble(10_000, 1.0, 100_000, Sampler::JumpChain, 0)?);
    guard.insert(seed, Arc::clone(&s));
    Ok(s)
}

fn critical_geometric(seed: u64, workers: usize) -> Result<Vec<CheckOutcome>> {
    let s = critical_ensemble(seed, workers)?;
    let m = s.replicas as f64;
    let empirical: BTreeMap<u64, f64> = s.marginal(Count::S).into_iter().map(|(k, c)| (k, c as f64 / m)).collect();
    let top = empirical.keys().next_back().copied().unwrap_or(0).max(60);
    let mut geometric: BTreeMap<u64, f64> = (0..top)
        .map(|i| (i, 0.5f64.powi(i as i32 + 1)))
        .collect();
    // Put the remaining tail mass on the last point.
    geometric.insert(top, 0.5f64.powi(top.min(1000) as i32));
    Ok(vec![CheckOutcome::new(
        "critical-geometric",
        tv_distance_discrete(&empirical, &geometric)?,
        Bound::Below { limit: 0.02 },
        "TV between final-s pmf (lambda=1, N=1e4, 1e5 replicas) and P(G=i)=2^-(i+1)",
    )])
}

fn critical_r_mixture(seed: u64, workers: usize) -> Result<Vec<CheckOutcome>> {
    let s = critical_ensemble(seed, workers)?;
    let r = s.scaled_summary(ScaledQuantity::ROverN);
    let i = s.scaled_summary(ScaledQuantity::IOverN);
    Ok(vec![
        CheckOutcome::new(
            "critical-r-mixture cdf(0.5)",
            r.ecdf(0.5),
            Bound::Within {
                center: limits::critical_r_mixture_cdf(0.5),
                tolerance: 0.02,
            },
            "empirical CDF of r/N at 0.5 (lambda=1, N=1e4, 1e5 replicas)",
        ),
        CheckOutcome::new(
            "critical-r-mixture atom",
            r.fraction_above(0.99),
            Bound::Range { low: 0.45, high: 0.55 },
            "fraction of r/N above 0.99",
        ),
        CheckOutcome::new(
            "critical-r-mixture i-law cdf(0.5)",
            i.ecdf(0.5),
            Bound::Within {
                center: limits::critical_i_law_cdf(0.5),
                tolerance: 0.02,
            },
            "empirical CDF of i/N at 0.5",
        ),
    ])
}

fn powered_exp_scaling(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let lambda = 0.5;
    let s = ctx.ensemble(100_000, lambda, 2000, Sampler::DirectClocks, 0)?;
    let sample = s.scaled_summary(ScaledQuantity::SOverPower);
    let d = ks_one_sample(&sample, |x| limits::powered_exponential_cdf(x, lambda));
    Ok(vec![CheckOutcome::new(
        "powered-exp-scaling",
        d,
        Bound::Below { limit: 0.08 },
        "KS of s/sqrt(N) against 1-exp(-x^2); lambda=0.5, N=1e5, 2000 replicas",
    )])
}

fn compound_exp(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let lambda = 2.0;
    let s = ctx.ensemble(100_000, lambda, 2000, Sampler::DirectClocks, 0)?;
    let sample = s.scaled_summary(ScaledQuantity::ROverPower);
    let failure = Cell::new(None);
    let d = ks_one_sample(&sample, |x| {
        limits::compound_exponential_cdf(x, lambda).unwrap_or_else(|e| {
            failure.set(Some(e));
            f64::NAN
        })
    });
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let target = 1.0 / std::f64::consts::PI.sqrt();
    Ok(vec![
        CheckOutcome::new(
            "compound-exp ks",
            d,
            Bound::Below { limit: 0.08 },
            "KS of r/sqrt(N) against the quadrature CDF; lambda=2, N=1e5, 2000 replicas",
        ),
        CheckOutcome::new(
            "compound-exp mean",
            sample.mean(),
            Bound::Within {
                center: 0.564,
                tolerance: 0.056,
            },
            format!(
                "mean r/sqrt(N) against the target 1/sqrt(pi) = {target:.6}; the mean of the limit law is \
                 Gamma(1-1/lambda) = {:.6}",
                gamma(1.0 - 1.0 / lambda)
            ),
        ),
    ])
}

/// Tilt used to estimate `E[I]` below criticality: makes the recovery
/// clock slow on roughly half of the draws.
pub fn outbreak_tilt(params: &ProcessParams) -> f64 {
    (params.n() as f64).powf(1.0 / params.lambda() - 1.0).max(1.0)
}

fn moment_asymptotics(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let m = 10_000;

    let s = ctx.ensemble(100_000, 0.5, m, Sampler::JumpChain, 0)?;
    let mean_s = s.mean(Count::S) / 100_000f64.sqrt();
    out.push(CheckOutcome::new(
        "moment-asymptotics mean s",
        mean_s,
        Bound::relative(gamma(1.5), 0.10),
        "mean s/sqrt(N); lambda=0.5, N=1e5, 1e4 replicas",
    ));

    let r = ctx.ensemble(10_000, 1.0, m, Sampler::JumpChain, 1)?;
    out.push(CheckOutcome::new(
        "moment-asymptotics mean r",
        r.mean(Count::R) / 10_000.0,
        Bound::relative(std::f64::consts::LN_2, 0.05),
        "mean r/N; lambda=1, N=1e4, 1e4 replicas",
    ));

    let params = ProcessParams::new(100_000, 0.5)?;
    let tilt = outbreak_tilt(&params);
    let w = estimate_means_tilted(&params, m, tilt, ctx.seed.wrapping_add(2), ctx.workers, 3.0)?;
    out.push(CheckOutcome::new(
        "moment-asymptotics mean i",
        w.i.mean,
        Bound::Range { low: 0.6, high: 1.4 },
        format!(
            "importance-sampled mean i; lambda=0.5, N=1e5, 1e4 replicas, tilt {tilt}; std error {:.4}",
            w.i.std_error
        ),
    ));
    Ok(out)
}

fn outbreak_power_law(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let lambda = 0.7;
    let grid: Vec<(f64, u64)> = [1_000, 10_000, 100_000].into_iter().map(|n| (lambda, n)).collect();
    let template = EnsembleConfig {
        params: ProcessParams::new(1, lambda)?,
        replicas: 10_000,
        sampler: Sampler::JumpChain,
        master_seed: ctx.seed,
        workers: ctx.workers,
    };
    let rows = sweep(&grid, &template, None)?;
    let mut points = Vec::new();
    for row in rows {
        let s = row.summary.map_err(crate::Error::InvalidParams)?;
        points.push((row.n as f64, s.mean(Count::I)));
    }
    let slope = log_log_slope(&points)?;
    let expected = 2.0 - 1.0 / lambda;
    Ok(vec![CheckOutcome::new(
        "outbreak-power-law",
        slope,
        Bound::Within {
            center: expected,
            tolerance: 0.1,
        },
        format!("log-log slope of mean i vs N at lambda=0.7; means {points:?}"),
    )])
}

fn race_slope(ctx: &Ctx) -> Result<Vec<CheckOutcome>> {
    let lambda = 0.75;
    let mut points = Vec::new();
    for (k, n) in [1_000u64, 10_000, 100_000].into_iter().enumerate() {
        let params = ProcessParams::new(n, lambda)?;
        let f = race_frequency(&params, 100_000, ctx.seed.wrapping_add(k as u64), ctx.workers)?;
        points.push((n as f64, f));
    }
    let slope = log_log_slope(&points)?;
    Ok(vec![CheckOutcome::new(
        "race-slope",
        slope,
        Bound::Within {
            center: 1.0 - 1.0 / lambda,
            tolerance: 0.1,
        },
        format!("log-log slope of P(sigma_N(N) < rho(N)) at lambda=0.75, 1e5 draws each; {points:?}"),
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Bound::Below { limit: 1.0 }.holds(0.5));
        assert!(!Bound::Below { limit: 1.0 }.holds(1.0));
        assert!(Bound::Above { limit: 1.0 }.holds(1.5));
        assert!(Bound::Within { center: 1.0, tolerance: 0.1 }.holds(1.05));
        assert!(!Bound::Within { center: 1.0, tolerance: 0.1 }.holds(1.2));
        assert!(Bound::Range { low: 0.0, high: 1.0 }.holds(0.0));
        assert!(!Bound::relative(2.0, 0.1).holds(2.3));
        assert!(!Bound::Below { limit: 1.0 }.holds(f64::NAN));
    }

    #[test]
    fn unknown_check_fails_softly() {
        let out = run_check("no-such-check", 1, 1);
        assert_eq!(out.len(), 1);
        assert!(!out[0].passed);
    }

    #[test]
    fn seeds_differ_per_check() {
        assert_ne!(check_seed(1, "eq-t1"), check_seed(1, "oracle-tv"));
        assert_eq!(check_seed(1, "eq-t1"), check_seed(1, "eq-t1"));
    }

    #[test]
    fn quick_is_a_prefix_of_full() {
        assert_eq!(&FULL_CHECKS[..QUICK_CHECKS.len()], &QUICK_CHECKS);
    }

    #[test]
    fn eq_t1_reports_exact_value() {
        let out = run_check("eq-t1", 3, 1);
        assert!(out.iter().all(|c| c.passed), "{out:?}");
        let empirical = out.iter().find(|c| c.name.starts_with("eq-t1 empirical n=7")).unwrap();
        match empirical.bound {
            Some(Bound::Within { center, .. }) => assert!((center - 1.0 / 3.1).abs() < 1e-15),
            _ => panic!("unexpected bound"),
        }
    }

    #[test]
    fn report_serializes() {
        let report = Report {
            level: Level::Quick,
            seed: 9,
            checks: vec![CheckOutcome::new("x", 0.1, Bound::Below { limit: 1.0 }, "")],
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(report.failures(), 0);
    }
}
