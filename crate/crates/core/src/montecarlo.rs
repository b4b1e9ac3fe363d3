//! Replica orchestration and ensemble summaries.
//!
//! Replica `i` of a run with master seed `m` always draws from the ChaCha8
//! stream `(m, i)`, so results do not depend on how replicas are spread
//! over threads. Replicas are processed in fixed blocks whose partial
//! summaries are merged in block order.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::coupling::{run_coupled, run_tilted_embedding, sample_race, CouplingMethod};
use crate::error::{Error, Result};
use crate::process::{run_jump_chain, AbsorptionRecord, Cause, ProcessParams, StateCounts};
use crate::stats::{mean_ci, EmpiricalSummary};

/// Replicas per scheduling unit.
pub const BLOCK_SIZE: u64 = 1024;

/// Largest sample materialized by [`EnsembleSummary::scaled_sample`].
pub const SCALED_SAMPLE_CAP: u64 = 1_000_000;

/// Odd constant used to derive per-point seeds in a sweep.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sampler {
    JumpChain,
    DirectClocks,
    PoissonEmbedding,
}

impl Sampler {
    pub const ALL: [Sampler; 3] = [Self::JumpChain, Self::DirectClocks, Self::PoissonEmbedding];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::JumpChain => "jump",
            Self::DirectClocks => "clocks",
            Self::PoissonEmbedding => "poisson",
        }
    }

    pub fn run(&self, params: &ProcessParams, rng: &mut ChaCha8Rng) -> AbsorptionRecord {
        match self {
            Self::JumpChain => run_jump_chain(params, rng),
            Self::DirectClocks => run_coupled(params, rng, CouplingMethod::DirectClocks),
            Self::PoissonEmbedding => run_coupled(params, rng, CouplingMethod::PoissonEmbedding),
        }
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown sampler {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub params: ProcessParams,
    pub replicas: u64,
    pub sampler: Sampler,
    pub master_seed: u64,
    pub workers: usize,
}

impl EnsembleConfig {
    pub fn new(params: ProcessParams, replicas: u64, sampler: Sampler, master_seed: u64) -> Self {
        Self {
            params,
            replicas,
            sampler,
            master_seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidParams("replicas must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParams("workers must be at least 1".into()));
        }
        // Re-validate in case the struct was built by deserialization.
        ProcessParams::new(self.params.n(), self.params.lambda())?;
        Ok(())
    }
}

/// The random stream owned by replica `index`.
pub fn replica_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs `work` on a pool of `workers` threads.
fn in_pool<T: Send>(workers: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(work))
}

/// Splits `0..total` into consecutive blocks, maps them in parallel and
/// returns the block results in order.
fn map_blocks<T: Send>(
    total: u64,
    workers: usize,
    block: impl Fn(std::ops::Range<u64>) -> T + Sync + Send,
) -> Result<Vec<T>> {
    let blocks = total.div_ceil(BLOCK_SIZE);
    in_pool(workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|b| block(b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(total)))
            .collect()
    })
}

/// Rescalings of the final state that have a nondegenerate limit in some
/// regime of `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaledQuantity {
    /// `S / N^{1−λ}`
    SOverPower,
    /// `R / N`
    ROverN,
    /// `I / N`
    IOverN,
    /// `R / N^{1/λ}`
    ROverPower,
    /// `(N − R) / N^{1−λ}`
    RDeficitOverPower,
    /// `(N − I) / N^{1/λ}`
    IDeficitOverPower,
}

impl ScaledQuantity {
    pub const ALL: [ScaledQuantity; 6] = [
        Self::SOverPower,
        Self::ROverN,
        Self::IOverN,
        Self::ROverPower,
        Self::RDeficitOverPower,
        Self::IDeficitOverPower,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::SOverPower => "s_over_n_pow_1_minus_lambda",
            Self::ROverN => "r_over_n",
            Self::IOverN => "i_over_n",
            Self::ROverPower => "r_over_n_pow_1_over_lambda",
            Self::RDeficitOverPower => "n_minus_r_over_n_pow_1_minus_lambda",
            Self::IDeficitOverPower => "n_minus_i_over_n_pow_1_over_lambda",
        }
    }

    /// Whether the rescaling has a nondegenerate limit at this `λ`.
    pub fn applies_to(&self, lambda: f64) -> bool {
        match self {
            Self::SOverPower | Self::RDeficitOverPower => lambda <= 1.0,
            Self::ROverN | Self::IOverN => (lambda - 1.0).abs() <= 1e-12,
            Self::ROverPower | Self::IDeficitOverPower => lambda >= 1.0,
        }
    }

    pub fn value(&self, state: StateCounts, params: &ProcessParams) -> f64 {
        let n = params.n() as f64;
        let lambda = params.lambda();
        match self {
            Self::SOverPower => state.s as f64 / n.powf(1.0 - lambda),
            Self::ROverN => state.r as f64 / n,
            Self::IOverN => state.i as f64 / n,
            Self::ROverPower => state.r as f64 / n.powf(1.0 / lambda),
            Self::RDeficitOverPower => (n - state.r as f64) / n.powf(1.0 - lambda),
            Self::IDeficitOverPower => (n - state.i as f64) / n.powf(1.0 / lambda),
        }
    }
}

/// Which count a moment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Count {
    S,
    I,
    R,
}

impl Count {
    fn of(&self, st: &StateCounts) -> u64 {
        match self {
            Count::S => st.s,
            Count::I => st.i,
            Count::R => st.r,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct PowerSums {
    sum: u128,
    sum_sq: u128,
}

impl PowerSums {
    fn add(&mut self, x: u64) {
        self.sum += x as u128;
        self.sum_sq += (x as u128) * (x as u128);
    }

    fn merge(&mut self, other: &Self) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

/// Mean estimate with a normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Aggregate of an ensemble of absorbed states.
///
/// The joint empirical law of the final state is kept exactly. An absorbed
/// state is determined by its cause and one count, so the law has at most
/// `2N` support points regardless of the number of replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub params: ProcessParams,
    pub sampler: Sampler,
    pub replicas: u64,
    pub susceptible_extinct: u64,
    pub infected_extinct: u64,
    #[serde(serialize_with = "serialize_law")]
    pub final_law: BTreeMap<StateCounts, u64>,
    pub ties: u64,
    pub total_jumps: u128,
    /// Sum of absorption times, in replica order; zero for the jump chain.
    pub total_time: f64,
    #[serde(skip)]
    s: PowerSums,
    #[serde(skip)]
    i: PowerSums,
    #[serde(skip)]
    r: PowerSums,
}

fn serialize_law<S: Serializer>(law: &BTreeMap<StateCounts, u64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Entry {
        s: u64,
        i: u64,
        r: u64,
        count: u64,
    }
    ser.collect_seq(law.iter().map(|(st, &count)| Entry {
        s: st.s,
        i: st.i,
        r: st.r,
        count,
    }))
}

impl EnsembleSummary {
    fn empty(params: ProcessParams, sampler: Sampler) -> Self {
        Self {
            params,
            sampler,
            replicas: 0,
            susceptible_extinct: 0,
            infected_extinct: 0,
            final_law: BTreeMap::new(),
            ties: 0,
            total_jumps: 0,
            total_time: 0.0,
            s: PowerSums::default(),
            i: PowerSums::default(),
            r: PowerSums::default(),
        }
    }

    fn push(&mut self, rec: &AbsorptionRecord) {
        self.replicas += 1;
        match rec.cause {
            Cause::SusceptibleExtinct => self.susceptible_extinct += 1,
            Cause::InfectedExtinct => self.infected_extinct += 1,
        }
        *self.final_law.entry(rec.final_state).or_insert(0) += 1;
        self.ties += rec.ties as u64;
        self.total_jumps += rec.jumps as u128;
        self.total_time += rec.time.unwrap_or(0.0);
        self.s.add(rec.final_state.s);
        self.i.add(rec.final_state.i);
        self.r.add(rec.final_state.r);
    }

    fn merge(&mut self, other: &Self) {
        self.replicas += other.replicas;
        self.susceptible_extinct += other.susceptible_extinct;
        self.infected_extinct += other.infected_extinct;
        for (st, c) in &other.final_law {
            *self.final_law.entry(*st).or_insert(0) += c;
        }
        self.ties += other.ties;
        self.total_jumps += other.total_jumps;
        self.total_time += other.total_time;
        self.s.merge(&other.s);
        self.i.merge(&other.i);
        self.r.merge(&other.r);
    }

    /// Summary of records listed in replica order. Equal to the output of
    /// [`run_replicas`] for the records of [`simulate_records`].
    pub fn from_records(params: ProcessParams, sampler: Sampler, records: &[AbsorptionRecord]) -> Self {
        let mut total = Self::empty(params, sampler);
        for chunk in records.chunks(BLOCK_SIZE as usize) {
            let mut part = Self::empty(params, sampler);
            for rec in chunk {
                part.push(rec);
            }
            total.merge(&part);
        }
        total
    }

    pub fn extinction_frequency(&self) -> f64 {
        self.susceptible_extinct as f64 / self.replicas as f64
    }

    /// Empirical law of one count.
    pub fn marginal(&self, count: Count) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for (st, c) in &self.final_law {
            *out.entry(count.of(st)).or_insert(0) += c;
        }
        out
    }

    /// Empirical joint law as probabilities.
    pub fn law_frequencies(&self) -> BTreeMap<StateCounts, f64> {
        let m = self.replicas as f64;
        self.final_law.iter().map(|(st, &c)| (*st, c as f64 / m)).collect()
    }

    pub fn mean(&self, count: Count) -> f64 {
        self.sums(count).sum as f64 / self.replicas as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self, count: Count) -> f64 {
        let m = self.replicas as f64;
        if self.replicas < 2 {
            return 0.0;
        }
        let p = self.sums(count);
        // Exact integer arithmetic up to the final division.
        let num = p.sum_sq * self.replicas as u128 - p.sum * p.sum;
        num as f64 / (m * (m - 1.0))
    }

    pub fn moment(&self, count: Count, z: f64) -> MomentEstimate {
        let mean = self.mean(count);
        let std_error = (self.variance(count) / self.replicas as f64).sqrt();
        MomentEstimate {
            mean,
            std_error,
            ci_low: mean - z * std_error,
            ci_high: mean + z * std_error,
        }
    }

    fn sums(&self, count: Count) -> &PowerSums {
        match count {
            Count::S => &self.s,
            Count::I => &self.i,
            Count::R => &self.r,
        }
    }

    /// The rescaled sample in increasing state order, expanded from the
    /// stored law. Ensembles above [`SCALED_SAMPLE_CAP`] replicas are thinned
    /// by taking every `k`-th order statistic, which keeps the empirical
    /// quantiles.
    pub fn scaled_sample(&self, quantity: ScaledQuantity) -> Vec<f64> {
        let stride = self.replicas.div_ceil(SCALED_SAMPLE_CAP).max(1);
        let mut values: Vec<(f64, u64)> = self
            .final_law
            .iter()
            .map(|(st, &c)| (quantity.value(*st, &self.params), c))
            .collect();
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Vec::with_capacity((self.replicas / stride) as usize + 1);
        let mut position = 0u64;
        for (v, c) in values {
            // Emit indices in [position, position + c) that are multiples of stride.
            let first = position.div_ceil(stride) * stride;
            let mut k = first;
            while k < position + c {
                out.push(v);
                k += stride;
            }
            position += c;
        }
        out
    }

    pub fn scaled_summary(&self, quantity: ScaledQuantity) -> EmpiricalSummary {
        EmpiricalSummary::new(self.scaled_sample(quantity))
    }

    /// Mean of a rescaled quantity with a `z`-interval.
    pub fn scaled_mean_ci(&self, quantity: ScaledQuantity, z: f64) -> Result<(f64, f64)> {
        mean_ci(&self.scaled_summary(quantity), z)
    }
}

/// Runs `config.replicas` replicas and summarizes them.
pub fn run_replicas(config: &EnsembleConfig) -> Result<EnsembleSummary> {
    config.validate()?;
    let params = config.params;
    let sampler = config.sampler;
    let blocks = map_blocks(config.replicas, config.workers, |range| {
        let mut part = EnsembleSummary::empty(params, sampler);
        for idx in range {
            let mut rng = replica_rng(config.master_seed, idx);
            part.push(&sampler.run(&params, &mut rng));
        }
        part
    })?;
    let mut total = EnsembleSummary::empty(params, sampler);
    for b in &blocks {
        total.merge(b);
    }
    Ok(total)
}

/// The individual records, in replica order, drawn from the same streams
/// as [`run_replicas`].
pub fn simulate_records(config: &EnsembleConfig) -> Result<Vec<AbsorptionRecord>> {
    config.validate()?;
    let params = config.params;
    let blocks = map_blocks(config.replicas, config.workers, |range| {
        range
            .map(|idx| config.sampler.run(&params, &mut replica_rng(config.master_seed, idx)))
            .collect::<Vec<_>>()
    })?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Frequency of `σ_N(N) < ρ(N)` over `draws` endpoint draws.
pub fn race_frequency(params: &ProcessParams, draws: u64, master_seed: u64, workers: usize) -> Result<f64> {
    if draws == 0 || workers == 0 {
        return Err(Error::InvalidParams("draws and workers must be at least 1".into()));
    }
    let hits: u64 = map_blocks(draws, workers, |range| {
        range
            .filter(|&idx| sample_race(params, &mut replica_rng(master_seed, idx)))
            .count() as u64
    })?
    .into_iter()
    .sum();
    Ok(hits as f64 / draws as f64)
}

/// Importance-sampled expectations of the final counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeans {
    pub replicas: u64,
    pub tilt: f64,
    pub extinction_probability: MomentEstimate,
    pub s: MomentEstimate,
    pub i: MomentEstimate,
    pub r: MomentEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct WeightedSums {
    // weight·x and (weight·x)² for ext indicator, s, i, r
    first: [f64; 4],
    second: [f64; 4],
}

/// Unbiased means of the final counts via the tilted Poisson embedding.
///
/// Useful when the mean is dominated by a rare event, such as the
/// outbreak size below criticality.
pub fn estimate_means_tilted(
    params: &ProcessParams,
    replicas: u64,
    tilt: f64,
    master_seed: u64,
    workers: usize,
    z: f64,
) -> Result<WeightedMeans> {
    if replicas < 2 || workers == 0 {
        return Err(Error::InvalidParams(
            "need at least two replicas and one worker".into(),
        ));
    }
    let blocks = map_blocks(replicas, workers, |range| {
        let mut acc = WeightedSums::default();
        for idx in range {
            let mut rng = replica_rng(master_seed, idx);
            let w = run_tilted_embedding(params, &mut rng, tilt)?;
            let st = w.record.final_state;
            let ext = if w.record.cause == Cause::SusceptibleExtinct { 1.0 } else { 0.0 };
            for (k, x) in [ext, st.s as f64, st.i as f64, st.r as f64].into_iter().enumerate() {
                let y = w.weight * x;
                acc.first[k] += y;
                acc.second[k] += y * y;
            }
        }
        Ok::<_, Error>(acc)
    })?;
    let mut total = WeightedSums::default();
    for b in blocks {
        let b = b?;
        for k in 0..4 {
            total.first[k] += b.first[k];
            total.second[k] += b.second[k];
        }
    }
    let m = replicas as f64;
    let est = |k: usize| {
        let mean = total.first[k] / m;
        let var = ((total.second[k] - m * mean * mean) / (m - 1.0)).max(0.0);
        let std_error = (var / m).sqrt();
        MomentEstimate {
            mean,
            std_error,
            ci_low: mean - z * std_error,
            ci_high: mean + z * std_error,
        }
    };
    Ok(WeightedMeans {
        replicas,
        tilt,
        extinction_probability: est(0),
        s: est(1),
        i: est(2),
        r: est(3),
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub n: u64,
    pub seed: u64,
    pub summary: std::result::Result<EnsembleSummary, String>,
    pub race_frequency: Option<std::result::Result<f64, String>>,
}

/// Seed used for grid point `k` of a sweep; point 0 keeps the master seed.
pub fn sweep_point_seed(master_seed: u64, k: usize) -> u64 {
    master_seed ^ (k as u64).wrapping_mul(SEED_STRIDE)
}

/// Runs an ensemble at every `(λ, N)` in `grid`, using `template` for the
/// remaining settings. Failures at one point are recorded in its row.
/// With `race_draws`, the race indicator frequency is estimated as well.
pub fn sweep(grid: &[(f64, u64)], template: &EnsembleConfig, race_draws: Option<u64>) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("sweep grid is empty".into()));
    }
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, &(lambda, n))| {
            let seed = sweep_point_seed(template.master_seed, k);
            let params = ProcessParams::new(n, lambda);
            let summary = params
                .and_then(|params| {
                    run_replicas(&EnsembleConfig {
                        params,
                        master_seed: seed,
                        ..*template
                    })
                })
                .map_err(|e| e.to_string());
            let race = race_draws.map(|draws| {
                ProcessParams::new(n, lambda)
                    .and_then(|p| race_frequency(&p, draws, seed, template.workers))
                    .map_err(|e| e.to_string())
            });
            SweepRow {
                lambda,
                n,
                seed,
                summary,
                race_frequency: race,
            }
        })
        .collect())
}
