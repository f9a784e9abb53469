//! Repeated-sampling studies: simulate trials under known rates, fit, predict,
//! and score the predictions exactly against the true rates.

mod presets;

pub use presets::{
    centre_sweep, figure_preset, table_preset, FigureCurve, FigureId, FigurePreset, TableId, TablePreset, TableRow,
    COUNT_CENSUS_TIMES, COUNT_CENTRES, FIGURE_REPLICATIONS, TABLE_REPLICATIONS, TARGET_RECRUITS, TIME_CENSUS_TIMES,
    TIME_CENTRES, TRIAL_LENGTH,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{normal_pdf, poisson_cdf, sample_gamma, sample_poisson, GammaParams};
use crate::error::{Error, Result};
use crate::model::{fit_mle, FitOptions, ModelFit, TrialData};
use crate::predict::{
    interval_from_pool, pool_centres, predictive_count_law, predictive_time_law, Objective, PooledPosterior,
    PredictionInterval, PredictionRequest,
};

/// Law of the centre rates `λ_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatePrior {
    SingleGamma { alpha: f64, beta: f64 },
    /// Equal-weight mixture of `Gam(α, β₁)` and `Gam(α, β₂)`.
    GammaMixture { alpha: f64, beta1: f64, beta2: f64 },
}

impl RatePrior {
    pub fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            RatePrior::SingleGamma { alpha, beta } => &[*alpha, *beta],
            RatePrior::GammaMixture { alpha, beta1, beta2 } => &[*alpha, *beta1, *beta2],
        };
        if params.iter().all(|p| *p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("rate prior parameters must be finite and > 0: {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RatePrior::SingleGamma { alpha, beta } => alpha / beta,
            RatePrior::GammaMixture { alpha, beta1, beta2 } => 0.5 * alpha * (1.0 / beta1 + 1.0 / beta2),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (alpha, beta) = match *self {
            RatePrior::SingleGamma { alpha, beta } => (alpha, beta),
            RatePrior::GammaMixture { alpha, beta1, beta2 } => {
                (alpha, if rng.random_bool(0.5) { beta1 } else { beta2 })
            }
        };
        sample_gamma(&GammaParams { shape: alpha, rate: beta }, rng)
    }
}

/// When each centre opens, relative to the start of recruitment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpeningSchedule {
    /// Every centre opens at time 0.
    Simultaneous,
    /// Opening times i.i.d. uniform on `[0, t]`.
    UniformOnCensus,
    /// The first `⌈C/2⌉` centres open at 0, the rest at the census itself.
    SplitHalf,
    Explicit { opening_times: Vec<f64> },
}

/// A complete repeated-sampling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub prior: RatePrior,
    pub num_centres: usize,
    pub census_time: f64,
    pub schedule: OpeningSchedule,
    pub objective: Objective,
    pub level: f64,
    pub replications: u64,
    pub seed: u64,
    /// Quantile levels for quantile-probability studies.
    #[serde(default)]
    pub p_grid: Vec<f64>,
    #[serde(default)]
    pub degenerate: DegeneratePolicy,
    #[serde(default)]
    pub endpoints: CountEndpoints,
}

/// Which integer endpoints of a count interval count as covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountEndpoints {
    /// `P(lower <= N <= upper)`.
    #[default]
    Inclusive,
    /// `P(lower < N <= upper)`, i.e. `F(upper) - F(lower)`.
    ExcludeLower,
}

/// Treatment of replications whose likelihood has no interior maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Keep them, using the capped fit (a near-Poisson predictive law).
    #[default]
    Cap,
    /// Drop them from the averages.
    Exclude,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            prior: RatePrior::SingleGamma { alpha: 2.0, beta: 150.0 },
            num_centres: 150,
            census_time: 200.0,
            schedule: OpeningSchedule::Simultaneous,
            objective: Objective::Count { t_plus: 200.0 },
            level: 0.9,
            replications: 2000,
            seed: 1,
            p_grid: vec![0.5],
            degenerate: DegeneratePolicy::default(),
            endpoints: CountEndpoints::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.prior.validate()?;
        if self.num_centres == 0 {
            return bad("at least one centre is required".into());
        }
        if !(self.census_time > 0.0) || !self.census_time.is_finite() {
            return bad(format!("census time must be finite and > 0, got {}", self.census_time));
        }
        if self.replications == 0 {
            return bad("at least one replication is required".into());
        }
        PredictionRequest { objective: self.objective, level: self.level, adjusted: false }
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let OpeningSchedule::Explicit { opening_times } = &self.schedule {
            if opening_times.len() != self.num_centres {
                return bad(format!("{} opening times for {} centres", opening_times.len(), self.num_centres));
            }
            if let Some(o) = opening_times.iter().find(|o| !(**o >= 0.0 && **o <= self.census_time)) {
                return bad(format!("opening time {o} outside [0, {}]", self.census_time));
            }
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("quantile level {p} outside (0, 1)"));
        }
        Ok(())
    }
}

/// Independent generators for one replication.
///
/// Each replication owns ChaCha stream `rep` of the experiment seed. Rates,
/// opening times and counts read disjoint segments of that stream, so changing
/// the schedule leaves the rate and count draws untouched.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    rates: ChaCha8Rng,
    openings: ChaCha8Rng,
    counts: ChaCha8Rng,
}

impl TrialStreams {
    pub fn new(seed: u64, replication: u64) -> Self {
        let segment = |k: u128| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(replication);
            rng.set_word_pos(k << 64);
            rng
        };
        Self { rates: segment(0), openings: segment(1), counts: segment(2) }
    }
}

/// True rates and the data observed at the census.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrial {
    pub rates: Vec<f64>,
    pub data: TrialData,
}

/// Draws rates, exposures and counts for one trial.
pub fn generate_trial(config: &SimConfig, streams: &mut TrialStreams) -> Result<SimulatedTrial> {
    let c = config.num_centres;
    let t = config.census_time;
    let rates: Vec<f64> = (0..c).map(|_| config.prior.sample(&mut streams.rates)).collect();
    let exposures: Vec<f64> = match &config.schedule {
        OpeningSchedule::Simultaneous => vec![t; c],
        OpeningSchedule::UniformOnCensus => {
            (0..c).map(|_| t - t * streams.openings.random::<f64>()).collect()
        }
        OpeningSchedule::SplitHalf => {
            let early = c - c / 2;
            (0..c).map(|i| if i < early { t } else { 0.0 }).collect()
        }
        OpeningSchedule::Explicit { opening_times } => opening_times.iter().map(|o| t - o).collect(),
    };
    let counts: Vec<u64> =
        rates.iter().zip(&exposures).map(|(l, e)| sample_poisson(l * e, &mut streams.counts)).collect();
    let data = TrialData::from_pairs(t, &exposures, &counts)?;
    Ok(SimulatedTrial { rates, data })
}

/// Probability that the interval contains the target under the true rates.
///
/// Count endpoints are inclusive: `P(lower <= N+ <= upper)` with
/// `N+ ~ Po(λ• t+)`. For time, `T+ ~ Gam(n+, λ•)`.
pub fn exact_coverage(rates: &[f64], interval: &PredictionInterval, objective: Objective) -> Result<f64> {
    exact_coverage_with(rates, interval, objective, CountEndpoints::Inclusive)
}

/// [`exact_coverage`] with a choice of endpoint convention for counts.
pub fn exact_coverage_with(
    rates: &[f64],
    interval: &PredictionInterval,
    objective: Objective,
    endpoints: CountEndpoints,
) -> Result<f64> {
    let total = total_rate(rates)?;
    let p = match objective {
        Objective::Count { t_plus } => {
            let mean = total * t_plus;
            let upper = poisson_cdf(interval.upper as u64, mean)?;
            let lower = interval.lower as u64;
            let below = match endpoints {
                CountEndpoints::ExcludeLower => poisson_cdf(lower, mean)?,
                CountEndpoints::Inclusive if lower >= 1 => poisson_cdf(lower - 1, mean)?,
                CountEndpoints::Inclusive => 0.0,
            };
            upper - below
        }
        Objective::Time { n_plus } => {
            let law = GammaParams::new(n_plus as f64, total)?;
            law.cdf(interval.upper)? - law.cdf(interval.lower)?
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

fn total_rate(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("rates must be non-empty and strictly positive".into()));
    }
    Ok(rates.iter().sum())
}

/// Mean coverage and width of plug-in and adjusted intervals over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Percent.
    pub mean_coverage_unadjusted: f64,
    /// Percent.
    pub mean_coverage_adjusted: f64,
    pub mean_width_unadjusted: f64,
    pub mean_width_adjusted: f64,
    pub mean_t_star: f64,
    /// Mean `t*` over the mean of the per-trial average exposure.
    pub t_star_ratio: f64,
    /// Mean `n*` over mean `n•`.
    pub n_star_ratio: f64,
    /// Replications included in the averages.
    pub replications: u64,
    /// Replications whose likelihood had no interior maximum, whether capped
    /// or dropped. Trials with no recruits at all are always dropped.
    pub degenerate_fits: u64,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    coverage_raw: f64,
    coverage_adj: f64,
    width_raw: f64,
    width_adj: f64,
    t_star: f64,
    mean_exposure: f64,
    n_star: f64,
    n_total: f64,
    degenerate: bool,
}

/// Fits a simulated trial; `None` when the replication is dropped.
fn fit_replication(config: &SimConfig, rep: u64) -> Result<Option<(SimulatedTrial, ModelFit, PooledPosterior)>> {
    let mut streams = TrialStreams::new(config.seed, rep);
    let trial = generate_trial(config, &mut streams)?;
    let opts = FitOptions { cap_degenerate: config.degenerate == DegeneratePolicy::Cap, ..FitOptions::default() };
    let fit = match fit_mle(&trial.data, &opts) {
        Ok(fit) if fit.degenerate && config.degenerate == DegeneratePolicy::Exclude => return Ok(None),
        Ok(fit) => fit,
        Err(Error::DegenerateLikelihood { .. } | Error::InsufficientData(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let pool = pool_centres(&trial.data, &fit)?;
    Ok(Some((trial, fit, pool)))
}

fn run_replication(config: &SimConfig, rep: u64) -> Result<Option<Outcome>> {
    let Some((trial, fit, pool)) = fit_replication(config, rep)? else {
        return Ok(None);
    };
    let request = |adjusted| PredictionRequest { objective: config.objective, level: config.level, adjusted };
    let raw = interval_from_pool(&pool, &request(false))?;
    let adj = interval_from_pool(&pool, &request(true))?;
    let data = &trial.data;
    Ok(Some(Outcome {
        coverage_raw: exact_coverage_with(&trial.rates, &raw, config.objective, config.endpoints)?,
        coverage_adj: exact_coverage_with(&trial.rates, &adj, config.objective, config.endpoints)?,
        width_raw: raw.width(),
        width_adj: adj.width(),
        t_star: pool.t_star,
        mean_exposure: data.total_exposure() / data.num_centres() as f64,
        n_star: pool.n_star,
        n_total: data.total_count() as f64,
        degenerate: fit.degenerate,
    }))
}

/// Sum in a fixed binary-tree order.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_of(outcomes: &[Outcome], f: impl Fn(&Outcome) -> f64) -> f64 {
    let xs: Vec<f64> = outcomes.iter().map(f).collect();
    pairwise_sum(&xs) / xs.len() as f64
}

/// Mean exact coverage and width of the 100·level% intervals.
///
/// Replications run in parallel on the current rayon pool; the result does
/// not depend on the number of threads.
pub fn coverage_study(config: &SimConfig) -> Result<CoverageReport> {
    config.validate()?;
    let results: Vec<Option<Outcome>> =
        (0..config.replications).into_par_iter().map(|rep| run_replication(config, rep)).collect::<Result<_>>()?;
    let outcomes: Vec<Outcome> = results.iter().flatten().copied().collect();
    let excluded = results.len() - outcomes.len();
    let degenerate_fits = (excluded + outcomes.iter().filter(|o| o.degenerate).count()) as u64;
    if outcomes.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "all {} replications gave degenerate fits",
            config.replications
        )));
    }
    let mean_t_star = mean_of(&outcomes, |o| o.t_star);
    Ok(CoverageReport {
        mean_coverage_unadjusted: 100.0 * mean_of(&outcomes, |o| o.coverage_raw),
        mean_coverage_adjusted: 100.0 * mean_of(&outcomes, |o| o.coverage_adj),
        mean_width_unadjusted: mean_of(&outcomes, |o| o.width_raw),
        mean_width_adjusted: mean_of(&outcomes, |o| o.width_adj),
        mean_t_star,
        t_star_ratio: mean_t_star / mean_of(&outcomes, |o| o.mean_exposure),
        n_star_ratio: mean_of(&outcomes, |o| o.n_star) / mean_of(&outcomes, |o| o.n_total),
        replications: outcomes.len() as u64,
        degenerate_fits,
    })
}

/// Values of `P(target <= predicted p-quantile | λ)` across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProbabilitySample {
    pub p: f64,
    pub values: Vec<f64>,
    pub degenerate_fits: u64,
}

/// For each replication, the true probability that the target falls at or
/// below the plug-in `p`-quantile.
pub fn quantile_probability_study(config: &SimConfig, p: f64) -> Result<QuantileProbabilitySample> {
    config.validate()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("quantile level must be in (0, 1), got {p}")));
    }
    let results: Vec<Option<(f64, bool)>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let Some((trial, fit, pool)) = fit_replication(config, rep)? else {
                return Ok(None);
            };
            let total = total_rate(&trial.rates)?;
            let value = match config.objective {
                Objective::Count { t_plus } => {
                    let q = predictive_count_law(&pool, t_plus)?.quantile(p)?;
                    poisson_cdf(q, total * t_plus)?
                }
                Objective::Time { n_plus } => {
                    let r = predictive_time_law(&pool, n_plus)?.quantile(p)?;
                    GammaParams::new(n_plus as f64, total)?.cdf(r)?
                }
            };
            Ok(Some((value, fit.degenerate)))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<(f64, bool)> = results.iter().flatten().copied().collect();
    let degenerate_fits = (results.len() - kept.len() + kept.iter().filter(|k| k.1).count()) as u64;
    let values = kept.into_iter().map(|k| k.0).collect();
    Ok(QuantileProbabilitySample { p, values, degenerate_fits })
}

/// Minimum sample size accepted by [`kernel_density`].
pub const KDE_MIN_SAMPLES: usize = 100;

/// Gaussian kernel density estimate for data on `[0, 1]`, reflected at both
/// ends, with Silverman's rule-of-thumb bandwidth.
pub fn kernel_density(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < KDE_MIN_SAMPLES {
        return Err(Error::InsufficientSamples(format!("need at least {KDE_MIN_SAMPLES} samples, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    let h = silverman_bandwidth(samples);
    if !(h > 0.0) {
        return Err(Error::InsufficientSamples("samples have zero spread; bandwidth would be 0".into()));
    }
    let k = |u: f64| normal_pdf(u / h);
    let scale = 1.0 / (n as f64 * h);
    Ok(grid
        .iter()
        .map(|&x| {
            let terms: Vec<f64> = samples.iter().map(|&s| k(x - s) + k(x + s) + k(x - (2.0 - s))).collect();
            scale * pairwise_sum(&terms)
        })
        .collect())
}

fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::poisson_pmf;

    fn small(schedule: OpeningSchedule) -> SimConfig {
        SimConfig { schedule, replications: 64, seed: 11, ..SimConfig::default() }
    }

    #[test]
    fn simultaneous_exposures_equal_census() {
        let cfg = small(OpeningSchedule::Simultaneous);
        let trial = generate_trial(&cfg, &mut TrialStreams::new(3, 0)).unwrap();
        assert_eq!(trial.rates.len(), 150);
        assert!(trial.data.centres().iter().all(|c| c.exposure == 200.0));
    }

    #[test]
    fn split_half_has_mean_exposure_half_census() {
        let cfg = small(OpeningSchedule::SplitHalf);
        let trial = generate_trial(&cfg, &mut TrialStreams::new(3, 0)).unwrap();
        let mean = trial.data.total_exposure() / 150.0;
        assert_eq!(mean, 100.0);
        let late = trial.data.centres().iter().filter(|c| c.exposure == 0.0).collect::<Vec<_>>();
        assert_eq!(late.len(), 75);
        assert!(late.iter().all(|c| c.count == 0));
    }

    #[test]
    fn uniform_openings_average_half_census() {
        let cfg = SimConfig { schedule: OpeningSchedule::UniformOnCensus, ..SimConfig::default() };
        let means: Vec<f64> = (0..200)
            .map(|rep| {
                let trial = generate_trial(&cfg, &mut TrialStreams::new(5, rep)).unwrap();
                trial.data.total_exposure() / 150.0
            })
            .collect();
        let m = means.iter().sum::<f64>() / 200.0;
        // Per-trial mean exposure has sd 200/sqrt(12 * 150).
        let se = 200.0 / (12.0f64 * 150.0).sqrt() / 200f64.sqrt();
        assert!((m - 100.0).abs() < 4.0 * se, "mean exposure {m}");
    }

    #[test]
    fn mean_total_count_matches_prior() {
        let cfg = SimConfig::default();
        let totals: Vec<f64> = (0..10_000)
            .map(|rep| generate_trial(&cfg, &mut TrialStreams::new(9, rep)).unwrap().data.total_count() as f64)
            .collect();
        let n = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / n;
        let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 400.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn mixture_prior_mean() {
        let prior = RatePrior::GammaMixture { alpha: 2.0, beta1: 150.0, beta2: 450.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - prior.mean()).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let cfg = small(OpeningSchedule::UniformOnCensus);
        let a = generate_trial(&cfg, &mut TrialStreams::new(7, 3)).unwrap();
        let b = generate_trial(&cfg, &mut TrialStreams::new(7, 3)).unwrap();
        let c = generate_trial(&cfg, &mut TrialStreams::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.rates, c.rates);
    }

    #[test]
    fn exact_coverage_full_support_and_lower_zero() {
        let rates = vec![1.0, 1.0];
        let obj = Objective::Count { t_plus: 5.0 };
        let iv = |lower, upper| PredictionInterval { lower, upper, nominal_level: 0.9, probs_used: (0.05, 0.95) };
        let full = exact_coverage(&rates, &iv(0.0, 1e4), obj).unwrap();
        assert!((full - 1.0).abs() < 1e-15);
        let low = exact_coverage(&rates, &iv(0.0, 12.0), obj).unwrap();
        assert_eq!(low, poisson_cdf(12, 10.0).unwrap());
        let time = exact_coverage(&rates, &iv(0.0, 1e6), Objective::Time { n_plus: 3 }).unwrap();
        assert!((time - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_coverage_matches_pmf_summation() {
        // λ• t+ = 400 over [360, 440], endpoints included.
        let rates = vec![1.0, 1.0];
        let iv = PredictionInterval { lower: 360.0, upper: 440.0, nominal_level: 0.9, probs_used: (0.05, 0.95) };
        let got = exact_coverage(&rates, &iv, Objective::Count { t_plus: 200.0 }).unwrap();
        let direct: f64 = (360..=440).map(|k| poisson_pmf(k, 400.0)).sum();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn excluding_lower_endpoint_drops_its_mass() {
        let rates = vec![2.0];
        let iv = PredictionInterval { lower: 360.0, upper: 440.0, nominal_level: 0.9, probs_used: (0.05, 0.95) };
        let obj = Objective::Count { t_plus: 200.0 };
        let closed = exact_coverage(&rates, &iv, obj).unwrap();
        let open = exact_coverage_with(&rates, &iv, obj, CountEndpoints::ExcludeLower).unwrap();
        assert!((closed - open - poisson_pmf(360, 400.0)).abs() < 1e-13);
    }

    #[test]
    fn exact_coverage_time_is_gamma_mass() {
        let rates = vec![0.5, 1.5];
        let iv = PredictionInterval { lower: 1.0, upper: 2.0, nominal_level: 0.9, probs_used: (0.05, 0.95) };
        let got = exact_coverage(&rates, &iv, Objective::Time { n_plus: 1 }).unwrap();
        assert!((got - ((-2.0f64).exp() - (-4.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn coverage_report_is_thread_count_invariant() {
        let cfg = small(OpeningSchedule::UniformOnCensus);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| coverage_study(&cfg))
        };
        let one = run(1).unwrap();
        let many = run(6).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.replications, 64);
    }

    #[test]
    fn explicit_zero_openings_reproduce_simultaneous() {
        let sim = small(OpeningSchedule::Simultaneous);
        let explicit = small(OpeningSchedule::Explicit { opening_times: vec![0.0; 150] });
        assert_eq!(coverage_study(&sim).unwrap(), coverage_study(&explicit).unwrap());
    }

    #[test]
    fn adjusted_intervals_cover_more() {
        let cfg = small(OpeningSchedule::Simultaneous);
        let r = coverage_study(&cfg).unwrap();
        assert!(r.mean_coverage_adjusted > r.mean_coverage_unadjusted);
        assert!(r.mean_width_adjusted > r.mean_width_unadjusted);
        assert!((0.0..=100.0).contains(&r.mean_coverage_adjusted));
        assert_eq!(r.mean_t_star, 200.0);
        assert_eq!(r.n_star_ratio, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig { replications: 0, ..SimConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.replications = 1;
        cfg.schedule = OpeningSchedule::Explicit { opening_times: vec![0.0; 3] };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.schedule = OpeningSchedule::Explicit { opening_times: vec![250.0; 150] };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.schedule = OpeningSchedule::Simultaneous;
        cfg.objective = Objective::Count { t_plus: 0.0 };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn kde_of_uniform_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let grid: Vec<f64> = (0..=80).map(|i| 0.1 + 0.01 * i as f64).collect();
        let d = kernel_density(&xs, &grid).unwrap();
        assert!(d.iter().all(|v| (v - 1.0).abs() < 0.1), "{d:?}");
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>().powi(3)).collect();
        let m = 2000;
        let grid: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let total: f64 = kernel_density(&xs, &grid).unwrap().iter().sum::<f64>() / m as f64;
        assert!((total - 1.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn kde_rejects_bad_samples() {
        assert!(matches!(kernel_density(&[0.5; 500], &[0.5]), Err(Error::InsufficientSamples(_))));
        assert!(matches!(kernel_density(&[0.5; 99], &[0.5]), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn ks_distance_of_grid_sample() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&xs, |x| x) - 0.005).abs() < 1e-12);
    }
}
