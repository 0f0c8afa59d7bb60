//! Limit order book reading of the four-mark, one-constraint model.
//!
//! Marks: 1 ask moves up, 2 ask moves down, 3 bid moves up, 4 bid moves
//! down. The constraint variable is the spread in ticks.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fclt_with_extra, FcltConfig, FcltResult};
use crate::hawkes::{fmt17, EventLog};
use crate::model::{ModelSpec, WeightFunction, LOB_ASK_WEIGHTS, LOB_BID_WEIGHTS, LOB_JUMPS, LOB_MID_WEIGHTS};
use crate::stats::{self, KsResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    /// `(time, value)` with the start point first, then one point per event.
    pub points: Vec<(f64, f64)>,
    pub tick: f64,
}

impl PriceSeries {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// CSV `time,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,value")?;
        for (t, v) in &self.points {
            writeln!(out, "{},{}", fmt17(*t), fmt17(*v))?;
        }
        Ok(())
    }
}

fn check_lob_log(log: &EventLog) -> Result<()> {
    if log.p != 4 || log.q != 1 {
        return Err(Error::Shape(format!(
            "order book series need p = 4, q = 1; log has p = {}, q = {}",
            log.p, log.q
        )));
    }
    Ok(())
}

pub fn is_lob_shaped(spec: &ModelSpec) -> bool {
    spec.p == 4 && spec.q == 1 && spec.jumps.iter().map(|r| r[0]).eq(LOB_JUMPS)
}

fn cumulative(log: &EventLog, start: f64, tick: f64, step: impl Fn(usize) -> f64) -> PriceSeries {
    let mut points = Vec::with_capacity(log.len() + 1);
    let mut v = start;
    points.push((log.start_time(), v));
    for e in &log.events {
        if e.mark > 0 {
            v += tick * step(e.mark);
        }
        points.push((e.time, v));
    }
    PriceSeries { points, tick }
}

/// `P(T_k) = P0 + tick · Σ_{j<=k} w_mid(I_j)`.
pub fn mid_price_series(log: &EventLog, p0: f64, tick: f64) -> Result<PriceSeries> {
    check_lob_log(log)?;
    Ok(cumulative(log, p0, tick, |m| LOB_MID_WEIGHTS[m - 1]))
}

/// Spread in price units, `tick · S(T_k)`.
pub fn spread_series(log: &EventLog, tick: f64) -> Result<PriceSeries> {
    check_lob_log(log)?;
    let s0 = log.initial.s[0] as f64;
    Ok(cumulative(log, tick * s0, tick, |m| LOB_JUMPS[m - 1] as f64))
}

/// `(bid, ask)` from an initial pair whose difference is the initial spread.
pub fn book_series(log: &EventLog, bid0: f64, ask0: f64, tick: f64) -> Result<(PriceSeries, PriceSeries)> {
    check_lob_log(log)?;
    let s0 = log.initial.s[0] as f64 * tick;
    if ((ask0 - bid0) - s0).abs() > 1e-9 * tick.abs().max(1.0) {
        return Err(Error::Shape(format!(
            "initial ask - bid = {} does not match the initial spread {s0}",
            ask0 - bid0
        )));
    }
    Ok((
        cumulative(log, bid0, tick, |m| LOB_BID_WEIGHTS[m - 1]),
        cumulative(log, ask0, tick, |m| LOB_ASK_WEIGHTS[m - 1]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadScaling {
    pub horizon: f64,
    /// Variance over replications of `T^{-1/2} (S(T) - mean)`.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobDemoReport {
    pub drift: f64,
    pub drift_se: f64,
    /// Diffusion coefficient `v(w)/E[Δ]` of the mid-price.
    pub diffusion: f64,
    pub diffusion_se: f64,
    /// The same coefficient from the pilot run's batch means.
    pub pilot_diffusion: f64,
    pub pilot_diffusion_se: f64,
    pub endpoint_ks: KsResult,
    pub endpoint_skewness: f64,
    pub endpoint_skewness_se: f64,
    pub spread_scaling: Vec<SpreadScaling>,
    pub fclt: FcltResult,
}

/// Mid-price scaling experiment: drift, diffusion coefficient, normality
/// and the non-scaling of the spread at `T/4` and `T`.
pub fn mid_price_scaling_demo(spec: &ModelSpec, horizon: f64, reps: u32, seed: u64) -> Result<LobDemoReport> {
    mid_price_scaling_demo_with(spec, &FcltConfig::new(horizon, reps, vec![0.25, 0.5, 1.0], seed))
}

pub fn mid_price_scaling_demo_with(spec: &ModelSpec, cfg: &FcltConfig) -> Result<LobDemoReport> {
    if !is_lob_shaped(spec) {
        return Err(Error::Shape("the demo needs the order book preset shape".into()));
    }
    let spread_w = WeightFunction::jump_column(spec, 0);
    let (fclt, times, extras) = fclt_with_extra(spec, &WeightFunction::mid_price(), &[spread_w], cfg)?;
    let s0 = spec.free_corner()[0] as f64;

    let spread_scaling = [0.25, 1.0]
        .iter()
        .map(|&frac| {
            let h = cfg.horizon * frac;
            let idx = times.partition_point(|&t| t < h);
            let s: Vec<f64> = extras.iter().map(|e| s0 + e[0][idx]).collect();
            SpreadScaling {
                horizon: h,
                variance: stats::variance(&s) / h,
            }
        })
        .collect();

    let d = &fclt.diagnostics;
    Ok(LobDemoReport {
        drift: fclt.pilot.e_w,
        drift_se: fclt.pilot.e_w_se,
        diffusion: d.pooled_diffusion,
        diffusion_se: d.pooled_diffusion_se,
        pilot_diffusion: fclt.pilot.diffusion,
        pilot_diffusion_se: fclt.pilot.diffusion_se,
        endpoint_ks: d.endpoint_ks,
        endpoint_skewness: d.endpoint_skewness,
        endpoint_skewness_se: d.endpoint_skewness_se,
        spread_scaling,
        fclt,
    })
}

impl fmt::Display for LobDemoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<34} {:.6e} ± {:.2e}", "mid-price drift E(w)", self.drift, self.drift_se)?;
        writeln!(f, "{:<34} {:.6} ± {:.2e}", "diffusion v(w)/E[delta] (paths)", self.diffusion, self.diffusion_se)?;
        writeln!(
            f,
            "{:<34} {:.6} ± {:.2e}",
            "diffusion v(w)/E[delta] (pilot)", self.pilot_diffusion, self.pilot_diffusion_se
        )?;
        writeln!(f, "{:<34} {:.6} (per step)", "v(w)", self.fclt.pilot.v_w)?;
        writeln!(
            f,
            "{:<34} D = {:.4}, p = {:.4}",
            "endpoint normality (KS)", self.endpoint_ks.statistic, self.endpoint_ks.p_value
        )?;
        writeln!(
            f,
            "{:<34} {:.4} ± {:.4}",
            "endpoint skewness", self.endpoint_skewness, self.endpoint_skewness_se
        )?;
        for s in &self.spread_scaling {
            writeln!(f, "{:<34} {:.6e}", format!("spread variance / T at T = {}", s.horizon), s.variance)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::{simulate, ChainState, PathSeed, StopRule};
    use crate::model::{lob_preset, scaled_identity4};

    fn preset() -> ModelSpec {
        lob_preset([0.1, 0.2, 0.2, 0.1], scaled_identity4(0.1), 1.0, 1.0).unwrap()
    }

    fn run(n: u64, seed: u64) -> EventLog {
        let spec = preset();
        simulate(&spec, &ChainState::at_rest(&spec, vec![1]), StopRule::Events(n), PathSeed::new(seed, 0), true).unwrap()
    }

    fn with_marks(marks: &[usize]) -> EventLog {
        let mut log = run(0, 0);
        for (k, &m) in marks.iter().enumerate() {
            log.events.push(crate::hawkes::Event {
                index: k as u64 + 1,
                time: k as f64 + 1.0,
                delta: 1.0,
                mark: m,
            });
        }
        log
    }

    #[test]
    fn mid_price_examples() {
        let empty = mid_price_series(&run(0, 0), 100.0, 1.0).unwrap();
        assert_eq!(empty.points, vec![(0.0, 100.0)]);
        assert_eq!(mid_price_series(&with_marks(&[1]), 10.0, 1.0).unwrap().points[1].1, 10.5);
        let s = mid_price_series(&with_marks(&[1, 2, 3]), 10.0, 1.0).unwrap();
        assert_eq!(s.points.last().unwrap().1, 10.5);
        assert_eq!(spread_series(&with_marks(&[1]), 1.0).unwrap().points[1].1, 2.0);
    }

    #[test]
    fn spread_never_below_one_tick() {
        let log = run(50_000, 5);
        let spread = spread_series(&log, 0.01).unwrap();
        assert!(spread.values().all(|v| v >= 0.01 - 1e-12));
        let snaps = log.snapshots.as_ref().unwrap();
        for (p, st) in spread.points[1..].iter().zip(snaps) {
            assert!((p.1 - 0.01 * st.s[0] as f64).abs() < 1e-9);
        }
        for (e, prev) in log.events.iter().zip(std::iter::once(1).chain(snaps.iter().map(|s| s.s[0]))) {
            if prev == 1 {
                assert!(e.mark != 2 && e.mark != 3);
            }
        }
    }

    #[test]
    fn mid_increments_and_book_consistency() {
        let log = run(20_000, 6);
        let mid = mid_price_series(&log, 100.0, 1.0).unwrap();
        for w in mid.points.windows(2) {
            let d = w[1].1 - w[0].1;
            assert!(d == 0.0 || d == 0.5 || d == -0.5);
        }
        let (bid, ask) = book_series(&log, 99.5, 100.5, 1.0).unwrap();
        let spread = spread_series(&log, 1.0).unwrap();
        for k in 0..mid.points.len() {
            assert_eq!((bid.points[k].1 + ask.points[k].1) / 2.0, mid.points[k].1);
            assert_eq!(ask.points[k].1 - bid.points[k].1, spread.points[k].1);
        }
        assert!(book_series(&log, 99.0, 100.5, 1.0).is_err());
    }

    #[test]
    fn spread_tail_is_geometric() {
        let log = run(400_000, 8);
        let spread = spread_series(&log, 1.0).unwrap();
        let mut hist = std::collections::BTreeMap::new();
        for v in spread.values() {
            *hist.entry(v as i64).or_insert(0u64) += 1;
        }
        let counts: Vec<f64> = hist.values().map(|&c| c as f64).collect();
        assert!(counts.len() >= 4);
        // successive ratios past the mode stay below one
        for w in counts.windows(2).skip(2).filter(|w| w[1] > 1000.0) {
            assert!(w[1] / w[0] < 1.0);
        }
        let mean = stats::mean(&spread.values().collect::<Vec<_>>());
        assert!(mean.is_finite() && mean < 10.0);
    }

    #[test]
    fn rejects_wrong_shape() {
        let spec = ModelSpec::unconstrained(1.0, 1.0, vec![1.0], vec![vec![0.0]]).unwrap();
        let log = simulate(&spec, &ChainState::default_for(&spec), StopRule::Events(3), PathSeed::new(0, 0), false).unwrap();
        assert!(matches!(mid_price_series(&log, 0.0, 1.0), Err(Error::Shape(_))));
        assert!(mid_price_scaling_demo(&spec, 10.0, 4, 0).is_err());
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        spread_series(&with_marks(&[1]), 1.0).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("time,value\n"));
    }
}
