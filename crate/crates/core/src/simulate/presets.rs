//! Experiment grids for the published coverage tables and density figures.

use std::fmt;
use std::str::FromStr;

use super::{CountEndpoints, DegeneratePolicy, OpeningSchedule, RatePrior, SimConfig};
use crate::asymptotics::LimitLaw;
use crate::error::{Error, Result};
use crate::predict::Objective;

/// Census times for count predictions; the horizon is `400 - t`.
pub const COUNT_CENSUS_TIMES: [f64; 7] = [50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0];
/// Census times for time-to-target predictions.
pub const TIME_CENSUS_TIMES: [f64; 7] = [50.0, 100.0, 150.0, 200.0, 300.0, 500.0, 1000.0];
pub const COUNT_CENTRES: [usize; 8] = [20, 50, 100, 150, 200, 250, 300, 400];
pub const TIME_CENTRES: [usize; 8] = [20, 50, 100, 150, 200, 300, 500, 1000];
pub const TRIAL_LENGTH: f64 = 400.0;
pub const TARGET_RECRUITS: u64 = 200;
/// Replications per row of a coverage table.
pub const TABLE_REPLICATIONS: u64 = 2000;
/// Replications per curve of a density figure.
pub const FIGURE_REPLICATIONS: u64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableId {
    /// Counts, simultaneous openings.
    T2,
    /// Counts, uniform openings.
    T3,
    /// Counts, half the centres opening at the census.
    T4,
    /// As `T2` with `β = 50`.
    D1,
    /// As `T2` with 20 centres.
    D2,
    /// As `T2` at the 95% level.
    D3,
    /// Time to 200 recruits, simultaneous openings.
    D4,
    /// Time, uniform openings.
    D5,
    /// Time, half the centres opening at the census.
    D6,
    /// Counts under a gamma-mixture rate law, uniform openings.
    F1,
    /// Time under a gamma-mixture rate law, uniform openings.
    F2,
}

impl TableId {
    pub const ALL: [TableId; 11] = [
        TableId::T2,
        TableId::T3,
        TableId::T4,
        TableId::D1,
        TableId::D2,
        TableId::D3,
        TableId::D4,
        TableId::D5,
        TableId::D6,
        TableId::F1,
        TableId::F2,
    ];
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TableId::T2 => "2",
            TableId::T3 => "3",
            TableId::T4 => "4",
            TableId::D1 => "D1",
            TableId::D2 => "D2",
            TableId::D3 => "D3",
            TableId::D4 => "D4",
            TableId::D5 => "D5",
            TableId::D6 => "D6",
            TableId::F1 => "F1",
            TableId::F2 => "F2",
        };
        f.write_str(s)
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('.', "");
        TableId::ALL
            .into_iter()
            .find(|id| id.to_string() == key)
            .ok_or_else(|| Error::Config(format!("unknown table id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub census_time: f64,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TablePreset {
    pub id: TableId,
    pub rows: Vec<TableRow>,
    /// Whether the table reports the pooling diagnostics `t*`, `t*/t̄`, `n*/n•`.
    pub diagnostics: bool,
}

/// Row configurations for a coverage table. Every row shares the seed.
///
/// Degenerate fits are kept (capped) and a count interval is scored as
/// `F(upper) - F(lower)`; under these conventions the published coverages
/// are reproduced to Monte Carlo accuracy.
pub fn table_preset(id: TableId, seed: u64, replications: u64) -> TablePreset {
    let single = |beta| RatePrior::SingleGamma { alpha: 2.0, beta };
    let mixture = RatePrior::GammaMixture { alpha: 2.0, beta1: 150.0, beta2: 450.0 };
    let (prior, centres, schedule, level, time) = match id {
        TableId::T2 => (single(150.0), 150, OpeningSchedule::Simultaneous, 0.9, false),
        TableId::T3 => (single(150.0), 150, OpeningSchedule::UniformOnCensus, 0.9, false),
        TableId::T4 => (single(150.0), 150, OpeningSchedule::SplitHalf, 0.9, false),
        TableId::D1 => (single(50.0), 150, OpeningSchedule::Simultaneous, 0.9, false),
        TableId::D2 => (single(150.0), 20, OpeningSchedule::Simultaneous, 0.9, false),
        TableId::D3 => (single(150.0), 150, OpeningSchedule::Simultaneous, 0.95, false),
        TableId::D4 => (single(150.0), 150, OpeningSchedule::Simultaneous, 0.9, true),
        TableId::D5 => (single(150.0), 150, OpeningSchedule::UniformOnCensus, 0.9, true),
        TableId::D6 => (single(150.0), 150, OpeningSchedule::SplitHalf, 0.9, true),
        TableId::F1 => (mixture, 150, OpeningSchedule::UniformOnCensus, 0.9, false),
        TableId::F2 => (mixture, 150, OpeningSchedule::UniformOnCensus, 0.9, true),
    };
    let diagnostics = schedule != OpeningSchedule::Simultaneous;
    let times = if time { TIME_CENSUS_TIMES } else { COUNT_CENSUS_TIMES };
    let rows = times
        .iter()
        .map(|&t| {
            let objective = if time {
                Objective::Time { n_plus: TARGET_RECRUITS }
            } else {
                Objective::Count { t_plus: TRIAL_LENGTH - t }
            };
            let config = SimConfig {
                prior,
                num_centres: centres,
                census_time: t,
                schedule: schedule.clone(),
                objective,
                level,
                replications,
                seed,
                p_grid: Vec::new(),
                degenerate: DegeneratePolicy::Cap,
                endpoints: CountEndpoints::ExcludeLower,
            };
            TableRow { census_time: t, config }
        })
        .collect();
    TablePreset { id, rows, diagnostics }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    /// Limit densities for the median count, census time varying.
    Fig1,
    /// Empirical median-count densities: census time varying, and centres
    /// varying with `β = C`.
    Fig2,
    /// Lower-quartile count densities, census time varying.
    Fig3,
    /// Median time densities, centres varying with `β = C`.
    Fig4,
    /// Lower-quartile time densities, census time varying.
    FigD1,
    /// As the centre sweep of `Fig2` with `β` fixed.
    FigD2,
    /// As `Fig4` with `β` fixed.
    FigD3,
}

impl FigureId {
    pub const ALL: [FigureId; 7] =
        [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3, FigureId::Fig4, FigureId::FigD1, FigureId::FigD2, FigureId::FigD3];
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::FigD1 => "figD1",
            FigureId::FigD2 => "figD2",
            FigureId::FigD3 => "figD3",
        };
        f.write_str(s)
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        FigureId::ALL
            .into_iter()
            .find(|id| id.to_string().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown figure id {s:?}")))
    }
}

/// One curve of a density figure.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureCurve {
    pub panel: String,
    pub label: String,
    pub config: SimConfig,
    pub p: f64,
    /// Large-`C` law of the quantile probability.
    pub law: LimitLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigurePreset {
    pub id: FigureId,
    pub curves: Vec<FigureCurve>,
    /// Whether the figure shows simulated densities as well as limits.
    pub empirical: bool,
}

fn base(seed: u64, replications: u64) -> SimConfig {
    SimConfig { replications, seed, ..SimConfig::default() }
}

impl FigureCurve {
    /// A curve for `config`, with its limit law; needs a single-gamma rate law.
    pub fn new(panel: &str, label: String, config: SimConfig, p: f64) -> Result<Self> {
        curve(panel, label, config, p)
    }
}

fn curve(panel: &str, label: String, config: SimConfig, p: f64) -> Result<FigureCurve> {
    let RatePrior::SingleGamma { alpha, beta } = config.prior else {
        return Err(Error::Unsupported("limit laws need a single gamma rate law".into()));
    };
    let t = config.census_time;
    let law = match config.objective {
        Objective::Count { t_plus } => LimitLaw::count(p, beta, t, t_plus)?,
        Objective::Time { n_plus } => LimitLaw::time(p, alpha, beta, t, n_plus as f64 / config.num_centres as f64)?,
    };
    Ok(FigureCurve { panel: panel.into(), label, config, p, law })
}

fn census_sweep(seed: u64, replications: u64, p: f64, time: bool) -> Result<Vec<FigureCurve>> {
    let times = if time { TIME_CENSUS_TIMES } else { COUNT_CENSUS_TIMES };
    times
        .iter()
        .map(|&t| {
            let objective = if time {
                Objective::Time { n_plus: TARGET_RECRUITS }
            } else {
                Objective::Count { t_plus: TRIAL_LENGTH - t }
            };
            let config = SimConfig { census_time: t, objective, p_grid: vec![p], ..base(seed, replications) };
            curve("census_time", format!("t={t}"), config, p)
        })
        .collect()
}

/// Configurations over a range of centre counts. Unless `fixed_beta`, the
/// rate-law `β` equals `C` so the expected total recruitment rate is constant.
pub fn centre_sweep(template: &SimConfig, centres: &[usize], fixed_beta: bool) -> Vec<SimConfig> {
    centres
        .iter()
        .map(|&c| {
            let mut config = template.clone();
            config.num_centres = c;
            if !fixed_beta {
                config.prior = match config.prior {
                    RatePrior::SingleGamma { alpha, .. } => RatePrior::SingleGamma { alpha, beta: c as f64 },
                    RatePrior::GammaMixture { alpha, beta1, beta2 } => {
                        let s = c as f64 / beta1;
                        RatePrior::GammaMixture { alpha, beta1: c as f64, beta2: beta2 * s }
                    }
                };
            }
            config
        })
        .collect()
}

fn centres_curves(seed: u64, replications: u64, p: f64, time: bool, fixed_beta: bool) -> Result<Vec<FigureCurve>> {
    let objective = if time {
        Objective::Time { n_plus: TARGET_RECRUITS }
    } else {
        Objective::Count { t_plus: TRIAL_LENGTH - 200.0 }
    };
    let template = SimConfig { objective, p_grid: vec![p], ..base(seed, replications) };
    let centres: &[usize] = if time { &TIME_CENTRES } else { &COUNT_CENTRES };
    centre_sweep(&template, centres, fixed_beta)
        .into_iter()
        .map(|config| {
            let label = format!("C={}", config.num_centres);
            curve("centres", label, config, p)
        })
        .collect()
}

/// Curves for a density figure.
pub fn figure_preset(id: FigureId, seed: u64, replications: u64) -> Result<FigurePreset> {
    let (curves, empirical) = match id {
        FigureId::Fig1 => (census_sweep(seed, replications, 0.5, false)?, false),
        FigureId::Fig2 => {
            let mut curves = census_sweep(seed, replications, 0.5, false)?;
            curves.extend(centres_curves(seed, replications, 0.5, false, false)?);
            (curves, true)
        }
        FigureId::Fig3 => (census_sweep(seed, replications, 0.25, false)?, true),
        FigureId::Fig4 => (centres_curves(seed, replications, 0.5, true, false)?, true),
        FigureId::FigD1 => (census_sweep(seed, replications, 0.25, true)?, true),
        FigureId::FigD2 => (centres_curves(seed, replications, 0.5, false, true)?, true),
        FigureId::FigD3 => (centres_curves(seed, replications, 0.5, true, true)?, true),
    };
    Ok(FigurePreset { id, curves, empirical })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ids_round_trip() {
        for id in TableId::ALL {
            assert_eq!(id.to_string().parse::<TableId>().unwrap(), id);
        }
        assert_eq!("d.4".parse::<TableId>().unwrap(), TableId::D4);
        assert!("7".parse::<TableId>().is_err());
        for id in FigureId::ALL {
            assert_eq!(id.to_string().parse::<FigureId>().unwrap(), id);
        }
        assert!("fig9".parse::<FigureId>().is_err());
    }

    #[test]
    fn count_tables_span_trial_length() {
        let t = table_preset(TableId::T2, 1, 10);
        assert_eq!(t.rows.len(), 7);
        assert!(!t.diagnostics);
        for (row, want) in t.rows.iter().zip(COUNT_CENSUS_TIMES) {
            assert_eq!(row.census_time, want);
            assert_eq!(row.config.objective, Objective::Count { t_plus: 400.0 - want });
            row.config.validate().unwrap();
        }
        assert!(table_preset(TableId::T3, 1, 10).diagnostics);
        assert_eq!(table_preset(TableId::D2, 1, 10).rows[0].config.num_centres, 20);
        assert_eq!(table_preset(TableId::D3, 1, 10).rows[0].config.level, 0.95);
    }

    #[test]
    fn time_tables_use_fixed_target() {
        let t = table_preset(TableId::D5, 1, 10);
        assert_eq!(t.rows.last().unwrap().census_time, 1000.0);
        assert!(t.rows.iter().all(|r| r.config.objective == Objective::Time { n_plus: 200 }));
    }

    #[test]
    fn centre_sweep_scales_beta() {
        let cfgs = centre_sweep(&SimConfig::default(), &[20, 400], false);
        assert_eq!(cfgs[1].prior, RatePrior::SingleGamma { alpha: 2.0, beta: 400.0 });
        let fixed = centre_sweep(&SimConfig::default(), &[20, 400], true);
        assert_eq!(fixed[1].prior, RatePrior::SingleGamma { alpha: 2.0, beta: 150.0 });
    }

    #[test]
    fn figure_presets_build() {
        for id in FigureId::ALL {
            let fig = figure_preset(id, 1, 100).unwrap();
            assert!(!fig.curves.is_empty());
            for c in &fig.curves {
                c.config.validate().unwrap();
            }
        }
        assert_eq!(figure_preset(FigureId::Fig2, 1, 100).unwrap().curves.len(), 15);
        assert!(!figure_preset(FigureId::Fig1, 1, 100).unwrap().empirical);
    }
}
