//! The embedded jump chain of the chase-escape process on `K_{N+2}`.
//!
//! Between jumps every infected vertex competes with every susceptible and
//! every recovered vertex. The infected count cancels from the competition,
//! so the next jump is an infection with probability `λS / (λS + R)` and a
//! recovery otherwise. Holding times do not affect the absorbed state, so
//! nothing here tracks continuous time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` accepted by [`exact_absorption_law`].
pub const EXACT_LAW_CAP: u64 = 20_000;

/// Population size and infection intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    n: u64,
    lambda: f64,
}

impl ProcessParams {
    pub fn new(n: u64, lambda: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self { n, lambda })
    }

    /// Number of initially susceptible vertices.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The starting configuration `(N, 1, 1)`.
    pub fn initial_state(&self) -> StateCounts {
        StateCounts { s: self.n, i: 1, r: 1 }
    }

    /// Total number of vertices, `N + 2`.
    pub fn population(&self) -> u64 {
        self.n + 2
    }
}

/// Susceptible, infected and recovered counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateCounts {
    pub s: u64,
    pub i: u64,
    pub r: u64,
}

impl StateCounts {
    pub fn new(s: u64, i: u64, r: u64) -> Self {
        Self { s, i, r }
    }

    pub fn total(&self) -> u64 {
        self.s + self.i + self.r
    }

    pub fn is_absorbed(&self) -> bool {
        self.s == 0 || self.i == 0
    }
}

/// Which population died out first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cause {
    /// Every vertex was infected at some point (the event `E_ext`).
    SusceptibleExtinct,
    /// The infection died out while susceptible vertices remained.
    InfectedExtinct,
}

impl Cause {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cause::SusceptibleExtinct => "SusceptibleExtinct",
            Cause::InfectedExtinct => "InfectedExtinct",
        }
    }
}

impl std::fmt::Display for Cause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The absorbed state reached by one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionRecord {
    pub final_state: StateCounts,
    pub cause: Cause,
    /// Number of jumps taken before absorption.
    pub jumps: u64,
    /// Absorption time; only clock-based samplers know it.
    pub time: Option<f64>,
    /// Floating-point ties between an infection and a recovery clock,
    /// resolved as infection first.
    pub ties: u32,
}

impl AbsorptionRecord {
    /// Builds the record for absorption after `infections` infections and
    /// `recoveries` recoveries.
    pub(crate) fn from_counts(
        n: u64,
        infections: u64,
        recoveries: u64,
        time: Option<f64>,
        ties: u32,
    ) -> Self {
        let final_state = StateCounts {
            s: n - infections,
            i: 1 + infections - recoveries,
            r: 1 + recoveries,
        };
        let cause = if final_state.s == 0 {
            Cause::SusceptibleExtinct
        } else {
            debug_assert_eq!(final_state.i, 0);
            Cause::InfectedExtinct
        };
        Self {
            final_state,
            cause,
            jumps: infections + recoveries,
            time,
            ties,
        }
    }
}

/// Probabilities that the next jump is an infection or a recovery.
pub fn jump_probabilities(s: u64, r: u64, lambda: f64) -> Result<(f64, f64)> {
    if s == 0 || r == 0 {
        return Err(Error::NoCompetition { s, r });
    }
    let infect = lambda * s as f64;
    let recover = r as f64;
    let total = infect + recover;
    Ok((infect / total, recover / total))
}

/// Applies one jump. An infection happens when `u < p_infect`.
pub fn step(state: StateCounts, u: f64, params: &ProcessParams) -> Result<StateCounts> {
    if state.is_absorbed() {
        return Err(Error::Absorbed {
            s: state.s,
            i: state.i,
            r: state.r,
        });
    }
    let (p_infect, _) = jump_probabilities(state.s, state.r, params.lambda)?;
    Ok(if u < p_infect {
        StateCounts {
            s: state.s - 1,
            i: state.i + 1,
            r: state.r,
        }
    } else {
        StateCounts {
            s: state.s,
            i: state.i - 1,
            r: state.r + 1,
        }
    })
}

/// Runs the embedded chain from `(N, 1, 1)` until absorption.
pub fn run_jump_chain<R: Rng + ?Sized>(params: &ProcessParams, rng: &mut R) -> AbsorptionRecord {
    let lambda = params.lambda;
    let n = params.n;
    let (mut s, mut i, mut r) = (n, 1u64, 1u64);
    let mut jumps = 0u64;
    while s > 0 && i > 0 {
        let u: f64 = rng.random();
        let infect = lambda * s as f64;
        if u < infect / (infect + r as f64) {
            s -= 1;
            i += 1;
        } else {
            i -= 1;
            r += 1;
        }
        jumps += 1;
    }
    let final_state = StateCounts { s, i, r };
    AbsorptionRecord {
        final_state,
        cause: if s == 0 {
            Cause::SusceptibleExtinct
        } else {
            Cause::InfectedExtinct
        },
        jumps,
        time: None,
        ties: 0,
    }
}

/// Full law of the absorbed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    pub support: Vec<(StateCounts, f64)>,
    pub extinction_probability: f64,
}

impl ExactLaw {
    pub fn probability_of(&self, state: StateCounts) -> f64 {
        self.support
            .iter()
            .find(|(st, _)| *st == state)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }
}

/// Forward-propagates probability mass through the jump chain.
///
/// States are indexed by infections `j` and recoveries `m`; the state after
/// `k = j + m` jumps is `(N - j, 1 + j - m, 1 + m)`. Every transition
/// increases `k` by one, so sweeping `k` upwards visits each state after all
/// of its predecessors. Live states satisfy `j < N` and `m <= j`.
pub fn exact_absorption_law(params: &ProcessParams) -> Result<ExactLaw> {
    let n = params.n;
    if n > EXACT_LAW_CAP {
        return Err(Error::CapExceeded {
            n,
            cap: EXACT_LAW_CAP,
        });
    }
    let lambda = params.lambda;
    let nu = n as usize;

    // infected_out[j]: mass absorbed at (N - j, 0, j + 2).
    // susceptible_out[m]: mass absorbed at (0, N + 1 - m, m + 1).
    let mut infected_out = vec![0.0f64; nu];
    let mut susceptible_out = vec![0.0f64; nu];

    // frontier[m] is the mass of the live state with m recoveries at level k.
    let mut frontier = vec![0.0f64; nu + 1];
    let mut next = vec![0.0f64; nu + 1];
    frontier[0] = 1.0;

    for k in 0..(2 * nu) {
        let m_hi = (k / 2).min(nu - 1);
        let m_lo = k.saturating_sub(nu - 1);
        if m_lo > m_hi {
            break;
        }
        for slot in next.iter_mut().take(m_hi + 2) {
            *slot = 0.0;
        }
        for m in m_lo..=m_hi {
            let mass = frontier[m];
            if mass == 0.0 {
                continue;
            }
            let j = k - m;
            let infect = lambda * (n - j as u64) as f64;
            let recover = (1 + m) as f64;
            let total = infect + recover;
            let p_infect = infect / total;
            let p_recover = recover / total;

            if j + 1 == nu {
                susceptible_out[m] += mass * p_infect;
            } else {
                next[m] += mass * p_infect;
            }
            if m + 1 > j {
                infected_out[j] += mass * p_recover;
            } else {
                next[m + 1] += mass * p_recover;
            }
        }
        std::mem::swap(&mut frontier, &mut next);
    }

    let mut support = Vec::with_capacity(2 * nu);
    for (j, &p) in infected_out.iter().enumerate() {
        let j = j as u64;
        support.push((StateCounts::new(n - j, 0, j + 2), p));
    }
    let mut extinction_probability = 0.0;
    for (m, &p) in susceptible_out.iter().enumerate() {
        let m = m as u64;
        support.push((StateCounts::new(0, n + 1 - m, m + 1), p));
        extinction_probability += p;
    }
    Ok(ExactLaw {
        support,
        extinction_probability,
    })
}

/// Probability that every susceptible vertex is eventually infected.
pub fn exact_extinction_probability(params: &ProcessParams) -> Result<f64> {
    exact_absorption_law(params).map(|law| law.extinction_probability)
}
