//! Long-run estimators of the scaling limit and the replication-based
//! functional CLT experiment.
//!
//! `E(w)` is the ratio `Σ w_o(I_k) / T_N`. The per-step asymptotic variance
//! `v(w)` of `g = w_o(I) - E(w) Δ` comes from non-overlapping batch means;
//! the physical-time diffusion coefficient is `v(w) / E[Δ]`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::{fmt17, simulate, ChainState, EventLog, PathSeed, Sampler, StopRule};
use crate::model::{ModelSpec, WeightFunction};
use crate::rng::PathRng;
use crate::stats::{self, KsResult};

pub const DEFAULT_BATCHES: usize = 64;
/// Pilot run length as a multiple of the experiment horizon.
pub const PILOT_FACTOR: f64 = 10.0;
pub const MIN_REPLICATIONS: u32 = 30;

fn check_weights(log: &EventLog, w: &WeightFunction) -> Result<()> {
    w.check_len(log.p)
}

/// `(E_w, mean_delta)`.
pub fn estimate_e(log: &EventLog, w: &WeightFunction) -> Result<(f64, f64)> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    check_weights(log, w)?;
    let total: f64 = log.events.iter().map(|e| w.at(e.mark)).sum();
    let elapsed: f64 = log.events.iter().map(|e| e.delta).sum();
    Ok((total / elapsed, elapsed / log.len() as f64))
}

/// `g(Z_k) = w_o(I_k) - E_w Δ_k` for every event of the log.
pub fn centered_increments(log: &EventLog, w: &WeightFunction, e_w: f64) -> Vec<f64> {
    log.events.iter().map(|e| w.at(e.mark) - e_w * e.delta).collect()
}

/// `(v_w, se)` from `batches` non-overlapping batch sums of `g`.
///
/// `v_w` is the sample variance of the batch sums divided by the batch
/// length; `se = v_w · sqrt(2 / (B - 1))`, the chi-square spread.
pub fn estimate_v(log: &EventLog, w: &WeightFunction, e_w: f64, batches: usize) -> Result<(f64, f64)> {
    check_weights(log, w)?;
    if batches < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 batches, got {batches}")));
    }
    let need = 2 * batches * 10;
    if log.len() < need {
        return Err(Error::InsufficientData(format!(
            "{} events for {batches} batches; need at least {need}",
            log.len()
        )));
    }
    let g = centered_increments(log, w, e_w);
    batch_variance(&g, batches)
}

fn batch_variance(g: &[f64], batches: usize) -> Result<(f64, f64)> {
    let len = g.len() / batches;
    let sums: Vec<f64> = g.chunks_exact(len).take(batches).map(|c| c.iter().sum()).collect();
    let v = stats::variance(&sums) / len as f64;
    Ok((v, v * (2.0 / (batches - 1) as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub batches: usize,
    pub batch_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    /// Long-run rate of the weighted count, per unit time.
    pub e_w: f64,
    pub e_w_se: f64,
    pub mean_delta: f64,
    /// Per-step asymptotic variance.
    pub v_w: f64,
    pub v_w_se: f64,
    /// `v_w / mean_delta`, per unit time.
    pub diffusion: f64,
    pub diffusion_se: f64,
    pub events: usize,
    pub elapsed: f64,
    pub batch_config: BatchConfig,
}

/// All scaling quantities from one log.
pub fn estimate_scaling(log: &EventLog, w: &WeightFunction, batches: usize) -> Result<ScalingEstimate> {
    let (e_w, mean_delta) = estimate_e(log, w)?;
    let (v_w, v_w_se) = estimate_v(log, w, e_w, batches)?;
    let elapsed = mean_delta * log.len() as f64;
    let diffusion = v_w / mean_delta;
    Ok(ScalingEstimate {
        e_w,
        e_w_se: (diffusion / elapsed).sqrt(),
        mean_delta,
        v_w,
        v_w_se,
        diffusion,
        diffusion_se: v_w_se / mean_delta,
        events: log.len(),
        elapsed,
        batch_config: BatchConfig {
            batches,
            batch_len: log.len() / batches,
        },
    })
}

/// Runs one path up to `times.last()` and returns, for each weight, the
/// cumulative `N(1_{(0,τ]} ⊗ w)` at each `τ` of the sorted `times`.
pub(crate) fn path_counts(
    spec: &ModelSpec,
    init: &ChainState,
    weights: &[WeightFunction],
    times: &[f64],
    seed: PathSeed,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = PathRng::new(seed.seed, seed.stream);
    let mut sampler = Sampler::new(spec, init.clone())?;
    let t0 = init.t;
    let mut out = vec![Vec::with_capacity(times.len()); weights.len()];
    let mut acc = vec![0.0; weights.len()];
    let mut next = 0;
    while next < times.len() {
        let ev = sampler.advance(&mut rng)?;
        while next < times.len() && ev.time - t0 > times[next] {
            for (o, a) in out.iter_mut().zip(&acc) {
                o.push(*a);
            }
            next += 1;
        }
        for (a, w) in acc.iter_mut().zip(weights) {
            *a += w.at(ev.mark);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltConfig {
    pub horizon: f64,
    pub replications: u32,
    /// Fractions of the horizon in `[0, 1]`.
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub batches: usize,
    /// Blocks per path for the pooled diffusion estimate.
    pub blocks: usize,
}

impl FcltConfig {
    pub fn new(horizon: f64, replications: u32, t_grid: Vec<f64>, seed: u64) -> Self {
        Self {
            horizon,
            replications,
            t_grid,
            seed,
            batches: DEFAULT_BATCHES,
            blocks: 8,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Shape(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.replications < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 replications, got {}",
                self.replications
            )));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Shape("t grid must be nonempty with values in [0, 1]".into()));
        }
        if self.blocks < 1 {
            return Err(Error::Shape("blocks must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    /// `t · v(w) / E[Δ]` from the pilot.
    pub predicted_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltDiagnostics {
    pub grid: Vec<GridPoint>,
    /// Normality of the largest-`t` column.
    pub endpoint_ks: KsResult,
    pub endpoint_skewness: f64,
    pub endpoint_skewness_se: f64,
    /// Correlation between the first and last grid increments.
    pub increment_correlation: Option<f64>,
    /// Diffusion coefficient from squared block increments of every path.
    pub pooled_diffusion: f64,
    pub pooled_diffusion_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltResult {
    pub config: FcltConfig,
    pub pilot: ScalingEstimate,
    /// `values[r][j]` for replication `r` and grid point `t_grid[j]`.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: FcltDiagnostics,
}

impl FcltResult {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// CSV `rep,t,value`, reps numbered from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rep,t,value")?;
        for (r, row) in self.values.iter().enumerate() {
            for (t, v) in self.config.t_grid.iter().zip(row) {
                writeln!(out, "{},{},{}", r + 1, t, fmt17(*v))?;
            }
        }
        Ok(())
    }
}

/// Sorted, deduplicated union of the grid times and block boundaries.
fn evaluation_times(cfg: &FcltConfig) -> Vec<f64> {
    let mut times: Vec<f64> = cfg.t_grid.iter().map(|t| t * cfg.horizon).collect();
    times.extend((1..=cfg.blocks).map(|k| cfg.horizon * k as f64 / cfg.blocks as f64));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn lookup(times: &[f64], x: f64) -> usize {
    times.partition_point(|&t| t < x)
}

/// Replicated paths of `T^{-1/2} (N(1_{[0,tT]} ⊗ w) - tT E(w))`.
///
/// The pilot runs on stream 0 for `PILOT_FACTOR · T`; replication `r`
/// (0-based) uses stream `r + 1`. Output order does not depend on the
/// number of worker threads.
pub fn fclt_experiment(spec: &ModelSpec, w: &WeightFunction, cfg: &FcltConfig) -> Result<FcltResult> {
    Ok(fclt_with_extra(spec, w, &[], cfg)?.0)
}

/// Per replication, per extra weight, per evaluation time.
pub(crate) type ExtraCounts = Vec<Vec<Vec<f64>>>;

/// As [`fclt_experiment`], also returning each replication's cumulative
/// count of every `extra` weight at the evaluation times `τ`, `[r][k][τ]`.
pub(crate) fn fclt_with_extra(
    spec: &ModelSpec,
    w: &WeightFunction,
    extra: &[WeightFunction],
    cfg: &FcltConfig,
) -> Result<(FcltResult, Vec<f64>, ExtraCounts)> {
    cfg.check()?;
    w.check_len(spec.p)?;
    let init = ChainState::default_for(spec);
    let pilot_log = simulate(
        spec,
        &init,
        StopRule::Horizon(PILOT_FACTOR * cfg.horizon),
        PathSeed::new(cfg.seed, 0),
        false,
    )?;
    let pilot = estimate_scaling(&pilot_log, w, cfg.batches)?;
    drop(pilot_log);

    let times = evaluation_times(cfg);
    let mut weights = vec![w.clone()];
    weights.extend_from_slice(extra);
    let paths: Vec<Result<Vec<Vec<f64>>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| path_counts(spec, &init, &weights, &times, PathSeed::new(cfg.seed, r as u64 + 1)))
        .collect();
    let paths: Vec<Vec<Vec<f64>>> = paths.into_iter().collect::<Result<_>>()?;

    let sqrt_t = cfg.horizon.sqrt();
    let e = pilot.e_w;
    let values: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| {
            cfg.t_grid
                .iter()
                .map(|&t| {
                    let tau = t * cfg.horizon;
                    let n = if t == 0.0 { 0.0 } else { p[0][lookup(&times, tau)] };
                    (n - tau * e) / sqrt_t
                })
                .collect()
        })
        .collect();

    let block = cfg.horizon / cfg.blocks as f64;
    let per_rep: Vec<f64> = paths
        .iter()
        .map(|p| {
            let mut prev = 0.0;
            let mut acc = 0.0;
            for k in 1..=cfg.blocks {
                let n = p[0][lookup(&times, block * k as f64)];
                let x = n - prev - e * block;
                acc += x * x;
                prev = n;
            }
            acc / (cfg.blocks as f64 * block)
        })
        .collect();
    let (pooled_diffusion, pooled_diffusion_se) = stats::mean_se(&per_rep);

    let extras = paths.into_iter().map(|mut p| p.split_off(1)).collect();
    let result = FcltResult {
        diagnostics: diagnostics(&values, cfg, &pilot, pooled_diffusion, pooled_diffusion_se),
        config: cfg.clone(),
        pilot,
        values,
    };
    Ok((result, times, extras))
}

fn diagnostics(values: &[Vec<f64>], cfg: &FcltConfig, pilot: &ScalingEstimate, pd: f64, pd_se: f64) -> FcltDiagnostics {
    let col = |j: usize| -> Vec<f64> { values.iter().map(|row| row[j]).collect() };
    let grid = cfg
        .t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let c = col(j);
            GridPoint {
                t,
                mean: stats::mean(&c),
                variance: stats::variance(&c),
                predicted_variance: t * pilot.diffusion,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..cfg.t_grid.len()).collect();
    order.sort_by(|&a, &b| cfg.t_grid[a].total_cmp(&cfg.t_grid[b]));
    let end = col(*order.last().expect("nonempty grid"));
    let (g1, g1_se) = stats::skewness(&end);

    // first and last increments over the sorted grid, starting from t = 0
    let mut points = vec![None];
    points.extend(order.iter().map(|&j| Some(j)));
    let value = |r: usize, p: Option<usize>| p.map_or(0.0, |j| values[r][j]);
    let increment_correlation = (points.len() >= 3).then(|| {
        let n = points.len();
        let first: Vec<f64> = (0..values.len()).map(|r| value(r, points[1]) - value(r, points[0])).collect();
        let last: Vec<f64> = (0..values.len())
            .map(|r| value(r, points[n - 1]) - value(r, points[n - 2]))
            .collect();
        stats::correlation(&first, &last)
    });

    FcltDiagnostics {
        grid,
        endpoint_ks: stats::ks_normal(&end),
        endpoint_skewness: g1,
        endpoint_skewness_se: g1_se,
        increment_correlation,
        pooled_diffusion: pd,
        pooled_diffusion_se: pd_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::Event;

    fn poisson() -> ModelSpec {
        ModelSpec::unconstrained(1.0, 1.0, vec![1.0], vec![vec![0.0]]).unwrap()
    }

    fn hand_log(events: &[(f64, usize)]) -> EventLog {
        let spec = poisson();
        let mut t = 0.0;
        let events = events
            .iter()
            .enumerate()
            .map(|(k, &(d, m))| {
                t += d;
                Event {
                    index: k as u64 + 1,
                    time: t,
                    delta: d,
                    mark: m,
                }
            })
            .collect();
        EventLog {
            spec_hash: spec.hash(),
            p: 1,
            q: 0,
            seed: 0,
            stream: 0,
            initial: ChainState::default_for(&spec),
            events,
            snapshots: None,
        }
    }

    #[test]
    fn estimate_e_hand_example() {
        let log = hand_log(&[(0.5, 1), (1.5, 0), (1.0, 1)]);
        let (e, d) = estimate_e(&log, &WeightFunction::ones(1)).unwrap();
        assert_eq!(e, 2.0 / 3.0);
        assert_eq!(d, 1.0);
        let (e0, _) = estimate_e(&log, &WeightFunction(vec![0.0])).unwrap();
        assert_eq!(e0, 0.0);
        assert!(matches!(estimate_e(&hand_log(&[]), &WeightFunction::ones(1)), Err(Error::EmptyLog)));
    }

    #[test]
    fn zero_weight_has_zero_variance() {
        let log = simulate(&poisson(), &ChainState::default_for(&poisson()), StopRule::Events(2000), PathSeed::new(1, 0), false).unwrap();
        let (v, se) = estimate_v(&log, &WeightFunction(vec![0.0]), 0.0, 64).unwrap();
        assert_eq!((v, se), (0.0, 0.0));
        assert!(matches!(
            estimate_v(&log, &WeightFunction(vec![0.0]), 0.0, 200),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn poisson_rate() {
        let spec = poisson();
        let log = simulate(&spec, &ChainState::default_for(&spec), StopRule::Events(100_000), PathSeed::new(3, 0), false).unwrap();
        let s = estimate_scaling(&log, &WeightFunction::ones(1), 64).unwrap();
        assert!((s.e_w - 1.0).abs() < 3.0 * s.e_w_se, "{s:?}");
        assert!((s.mean_delta - 0.5).abs() < 0.01);
    }

    #[test]
    fn zero_column_is_zero() {
        let cfg = FcltConfig::new(200.0, 4, vec![0.0, 0.5, 1.0], 9);
        let r = fclt_experiment(&poisson(), &WeightFunction::ones(1), &cfg).unwrap();
        assert!(r.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(r.values.len(), 4);
    }

    #[test]
    fn fclt_is_thread_count_invariant() {
        let cfg = FcltConfig::new(100.0, 6, vec![0.25, 1.0], 4);
        let spec = poisson();
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| fclt_experiment(&spec, &WeightFunction::ones(1), &cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn rejects_bad_grid() {
        let cfg = FcltConfig::new(10.0, 4, vec![1.5], 0);
        assert!(fclt_experiment(&poisson(), &WeightFunction::ones(1), &cfg).is_err());
    }

    proptest::proptest! {
        #[test]
        fn ratio_estimator_centers_its_own_sum(
            deltas in proptest::collection::vec((0.01..3.0f64, 0usize..2), 1..200),
            c in -3.0..3.0f64,
        ) {
            let log = hand_log(&deltas);
            let w = WeightFunction(vec![c]);
            let (e, _) = estimate_e(&log, &w).unwrap();
            let s: f64 = centered_increments(&log, &w, e).iter().sum();
            let scale: f64 = log.events.iter().map(|ev| w.at(ev.mark).abs() + (e * ev.delta).abs()).sum();
            proptest::prop_assert!(s.abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
