//! Clock-based exact samplers.
//!
//! Infections and recoveries are decoupled into two independent chains: a
//! pure death chain started from `N` whose `i`-th jump happens at
//! `σ_N(i)` (increments `Exp(λ(N - i))`), and a rate-1 Yule process started
//! from one individual whose `i`-th birth happens at `ρ(i)` (increments
//! `Exp(i)`). The chase-escape jump sequence has the same law as the merged
//! sequence of these clock times, stopped when the recoveries overtake the
//! infections or when the death chain is exhausted.
//!
//! The second construction represents both Yule processes through unit
//! Poisson processes and their terminal values:
//!
//! ```text
//! ρ(i)   = ln(1 + τ_i / ℰ)
//! σ_N(i) = λ⁻¹ ln(1 + τ̄_N / ℰ̄) − λ⁻¹ ln(1 + τ̄_{N−i} / ℰ̄)
//! ```

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{AbsorptionRecord, ProcessParams};

/// Infection and recovery clock times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockPaths {
    /// `σ_N(1), …, σ_N(N)`.
    pub sigma: Vec<f64>,
    /// `ρ(1), ρ(2), …`; at least `N` entries are needed for absorption.
    pub rho: Vec<f64>,
}

/// Terminal values and Poisson arrival times behind the two Yule processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDraw {
    /// Terminal value of the rate-1 (recovery) Yule process.
    pub e: f64,
    /// Terminal value of the rate-λ (infection) Yule process.
    pub e_bar: f64,
    /// `τ_1 < τ_2 < …`
    pub tau: Vec<f64>,
    /// `τ̄_1 < … < τ̄_N`
    pub tau_bar: Vec<f64>,
}

/// Which clock construction drives [`run_coupled`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingMethod {
    DirectClocks,
    PoissonEmbedding,
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

pub fn sample_clock_paths<R: Rng + ?Sized>(params: &ProcessParams, rng: &mut R) -> ClockPaths {
    let n = params.n();
    let lambda = params.lambda();
    let mut sigma = Vec::with_capacity(n as usize);
    let mut t = 0.0;
    for i in 0..n {
        t += exp1(rng) / (lambda * (n - i) as f64);
        sigma.push(t);
    }
    let mut rho = Vec::with_capacity(n as usize + 1);
    let mut t = 0.0;
    for i in 1..=n + 1 {
        t += exp1(rng) / i as f64;
        rho.push(t);
    }
    ClockPaths { sigma, rho }
}

/// Draws `ℰ`, `ℰ̄`, `τ̄_1..τ̄_N` and `τ_1..τ_{N+1}`.
pub fn sample_poisson_embedding<R: Rng + ?Sized>(
    params: &ProcessParams,
    rng: &mut R,
) -> EmbeddingDraw {
    let n = params.n() as usize;
    let e = exp1(rng);
    let e_bar = exp1(rng);
    let tau_bar = arrivals(n, rng);
    let tau = arrivals(n + 1, rng);
    EmbeddingDraw {
        e,
        e_bar,
        tau,
        tau_bar,
    }
}

fn arrivals<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut t = 0.0;
    for _ in 0..count {
        t += exp1(rng);
        out.push(t);
    }
    out
}

/// `σ_N(i)` from the infection embedding, written as a single `ln_1p` so
/// that small `i` does not lose precision to cancellation.
fn sigma_from_embedding(tau_bar_n: f64, tau_bar_rest: f64, e_bar: f64, lambda: f64) -> f64 {
    ((tau_bar_n - tau_bar_rest) / (e_bar + tau_bar_rest)).ln_1p() / lambda
}

pub fn clocks_from_embedding(draw: &EmbeddingDraw, params: &ProcessParams) -> Result<ClockPaths> {
    let n = params.n() as usize;
    if draw.tau_bar.len() < n || draw.tau.len() < n {
        return Err(Error::PathMismatch(params.n()));
    }
    let lambda = params.lambda();
    let tau_bar_n = draw.tau_bar[n - 1];
    let sigma = (1..=n)
        .map(|i| {
            let rest = if i == n { 0.0 } else { draw.tau_bar[n - i - 1] };
            sigma_from_embedding(tau_bar_n, rest, draw.e_bar, lambda)
        })
        .collect();
    let rho = draw.tau.iter().map(|&t| (t / draw.e).ln_1p()).collect();
    Ok(ClockPaths { sigma, rho })
}

/// Merges the two clock streams in time order and stops at absorption.
///
/// `sigma` must yield exactly `n` nondecreasing times; `rho` must yield at
/// least `n` nondecreasing times (an exhausted `rho` counts as `+∞`).
/// Equal times are resolved as infection first.
pub(crate) fn absorb_streams<S, Q>(n: u64, mut sigma: S, mut rho: Q) -> AbsorptionRecord
where
    S: Iterator<Item = f64>,
    Q: Iterator<Item = f64>,
{
    let mut infections = 0u64;
    let mut recoveries = 0u64;
    let mut ties = 0u32;
    let mut next_infection = sigma.next().unwrap_or(f64::INFINITY);
    let mut next_recovery = rho.next().unwrap_or(f64::INFINITY);
    loop {
        if next_recovery < next_infection {
            recoveries += 1;
            if recoveries > infections {
                return AbsorptionRecord::from_counts(
                    n,
                    infections,
                    recoveries,
                    Some(next_recovery),
                    ties,
                );
            }
            next_recovery = rho.next().unwrap_or(f64::INFINITY);
        } else {
            if next_recovery == next_infection {
                ties += 1;
            }
            infections += 1;
            if infections == n {
                return AbsorptionRecord::from_counts(
                    n,
                    infections,
                    recoveries,
                    Some(next_infection),
                    ties,
                );
            }
            next_infection = sigma.next().unwrap_or(f64::INFINITY);
        }
    }
}

/// Absorbed state determined by a pair of clock paths.
///
/// With `k* = min{i ≥ 1 : ρ(i) < σ_N(i)}`, the infection dies out at
/// `ρ(k*)` leaving `(N - k* + 1, 0, k* + 1)`; if no such `k* ≤ N` exists
/// every vertex is infected at `σ_N(N)` and `R = 1 + #{i : ρ(i) < σ_N(N)}`.
pub fn absorb_from_clocks(paths: &ClockPaths, params: &ProcessParams) -> Result<AbsorptionRecord> {
    let n = params.n();
    if paths.sigma.len() as u64 != n || (paths.rho.len() as u64) < n {
        return Err(Error::PathMismatch(n));
    }
    Ok(absorb_streams(
        n,
        paths.sigma.iter().copied(),
        paths.rho.iter().copied(),
    ))
}

/// Streams `σ_N(1..N)` from the Poisson embedding, walking `τ̄` downwards
/// from `τ̄_N ~ Gamma(N, 1)`: given `τ̄_k`, the ratio `τ̄_{k-1} / τ̄_k` is the
/// maximum of `k - 1` uniforms, independent of everything above it.
struct EmbeddedSigma {
    lambda: f64,
    e_bar: f64,
    tau_bar_n: f64,
    /// Index `k` of `current = τ̄_k`; `σ_N(N - k)` is the next output.
    k: u64,
    current: f64,
}

impl EmbeddedSigma {
    fn new<R: Rng + ?Sized>(n: u64, lambda: f64, e_bar: f64, rng: &mut R) -> Self {
        let tau_bar_n = Gamma::new(n as f64, 1.0)
            .expect("shape n >= 1")
            .sample(rng);
        Self {
            lambda,
            e_bar,
            tau_bar_n,
            k: n,
            current: tau_bar_n,
        }
    }

    fn next_time<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        if self.k == 0 {
            return None;
        }
        let below = if self.k == 1 {
            0.0
        } else {
            let u: f64 = Open01.sample(rng);
            self.current * (u.ln() / (self.k - 1) as f64).exp()
        };
        self.k -= 1;
        self.current = below;
        Some(sigma_from_embedding(
            self.tau_bar_n,
            below,
            self.e_bar,
            self.lambda,
        ))
    }
}

/// Runs the chase-escape process through one of the clock constructions.
///
/// Clock times are generated on demand, so the work is proportional to the
/// number of jumps and no path is stored.
pub fn run_coupled<R: Rng + ?Sized>(
    params: &ProcessParams,
    rng: &mut R,
    method: CouplingMethod,
) -> AbsorptionRecord {
    match method {
        CouplingMethod::DirectClocks => run_direct(params, rng),
        CouplingMethod::PoissonEmbedding => {
            let e = exp1(rng);
            let e_bar = exp1(rng);
            run_embedded(params, rng, e, e_bar)
        }
    }
}

fn run_direct<R: Rng + ?Sized>(params: &ProcessParams, rng: &mut R) -> AbsorptionRecord {
    let n = params.n();
    let lambda = params.lambda();
    // Both streams draw from one generator. Every draw is consumed once, so
    // the increments stay independent whatever the interleaving.
    let rng = std::cell::RefCell::new(rng);
    let (mut sig_index, mut sig_time) = (0u64, 0.0f64);
    let (mut rho_index, mut rho_time) = (0u64, 0.0f64);
    let sigma_iter = std::iter::from_fn(|| {
        if sig_index == n {
            return None;
        }
        sig_time += exp1(&mut **rng.borrow_mut()) / (lambda * (n - sig_index) as f64);
        sig_index += 1;
        Some(sig_time)
    });
    let rho_iter = std::iter::from_fn(|| {
        rho_index += 1;
        rho_time += exp1(&mut **rng.borrow_mut()) / rho_index as f64;
        Some(rho_time)
    });
    absorb_streams(n, sigma_iter, rho_iter)
}

fn run_embedded<R: Rng + ?Sized>(
    params: &ProcessParams,
    rng: &mut R,
    e: f64,
    e_bar: f64,
) -> AbsorptionRecord {
    let n = params.n();
    let rng = std::cell::RefCell::new(rng);
    let mut sigma = EmbeddedSigma::new(n, params.lambda(), e_bar, &mut **rng.borrow_mut());
    let mut tau = 0.0f64;
    let sigma_iter = std::iter::from_fn(|| sigma.next_time(&mut **rng.borrow_mut()));
    let rho_iter = std::iter::from_fn(|| {
        tau += exp1(&mut **rng.borrow_mut());
        Some((tau / e).ln_1p())
    });
    absorb_streams(n, sigma_iter, rho_iter)
}

/// A record together with its importance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedRecord {
    pub record: AbsorptionRecord,
    pub weight: f64,
}

/// Poisson-embedding run with the recovery terminal value `ℰ` drawn from
/// the mixture `½ Exp(1) + ½ Exp(tilt)` instead of `Exp(1)`.
///
/// Extinction of the susceptibles for `λ < 1` needs a slow recovery clock,
/// i.e. a small `ℰ`; a large `tilt` makes such draws common. The returned
/// weight `e^{-ℰ} / q(ℰ)` is at most 2, and `E[weight · f(record)]` equals
/// the untilted expectation for every `f`.
pub fn run_tilted_embedding<R: Rng + ?Sized>(
    params: &ProcessParams,
    rng: &mut R,
    tilt: f64,
) -> Result<WeightedRecord> {
    if !(tilt.is_finite() && tilt >= 1.0) {
        return Err(Error::Domain(format!("tilt must be finite and >= 1, got {tilt}")));
    }
    let e = if rng.random::<bool>() {
        exp1(rng)
    } else {
        exp1(rng) / tilt
    };
    let e_bar = exp1(rng);
    // q(e) / e^{-e} = ½ + ½·tilt·e^{-(tilt-1)e}
    let weight = 1.0 / (0.5 + 0.5 * tilt * (-(tilt - 1.0) * e).exp());
    let record = run_embedded(params, rng, e, e_bar);
    Ok(WeightedRecord { record, weight })
}

/// Whether `σ_N(N) < ρ(N)`, i.e. `(1 + τ̄_N/ℰ̄)^{1/λ} < 1 + τ_N/ℰ`.
pub fn sigma_rho_race(draw: &EmbeddingDraw, params: &ProcessParams) -> Result<bool> {
    let n = params.n() as usize;
    if draw.tau_bar.len() < n || draw.tau.len() < n {
        return Err(Error::PathMismatch(params.n()));
    }
    Ok(race_from_endpoints(
        draw.tau_bar[n - 1],
        draw.tau[n - 1],
        draw.e,
        draw.e_bar,
        params.lambda(),
    ))
}

fn race_from_endpoints(tau_bar_n: f64, tau_n: f64, e: f64, e_bar: f64, lambda: f64) -> bool {
    (tau_bar_n / e_bar).ln_1p() / lambda < (tau_n / e).ln_1p()
}

/// The race indicator with `τ_N` and `τ̄_N` drawn directly from
/// `Gamma(N, 1)`; constant cost in `N`.
pub fn sample_race<R: Rng + ?Sized>(params: &ProcessParams, rng: &mut R) -> bool {
    let gamma = Gamma::new(params.n() as f64, 1.0).expect("shape n >= 1");
    let e = exp1(rng);
    let e_bar = exp1(rng);
    let tau_bar_n = gamma.sample(rng);
    let tau_n = gamma.sample(rng);
    race_from_endpoints(tau_bar_n, tau_n, e, e_bar, params.lambda())
}
