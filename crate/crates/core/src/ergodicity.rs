//! Ergodicity classification.
//!
//! Analytic part: spectral radius of the fertility matrix, the vector
//! `u = (Id - ℵ^T)^{-1} 1_p`, unconstrained mark rates and the drift
//! indicators `(J^𝒥)^T (Id - ℵ)^{-1} μ0` for every nonempty constraint
//! subset `𝒥`. Monte-Carlo part: for `𝒥' ⊊ 𝒥`, the stationary mean of
//! `J^𝒥(I)` under the chain that keeps only the constraints in `𝒥'`.
//!
//! Subsets are processed by increasing size, so a chain is only simulated
//! once all of its own conditions have come out negative. The loop covers
//! all `2^q - 1` subsets and is meant for small `q`.
//!
//! Constraint indices are 0-based in function arguments and 1-based in
//! [`ErgodicityReport`], which is what users read.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::access::{check_access, AccessVerdict};
use crate::error::{Error, Result};
use crate::hawkes::{keep_constraints, ChainState, Sampler};
use crate::linalg;
use crate::model::{ModelSpec, WeightFunction};
use crate::rng::{stream_id, PathRng};

pub use crate::linalg::{branching_vector, spectral_radius};

/// Minimum number of events discarded before stationary averages.
pub const MIN_BURN_IN: u64 = 10_000;
/// Fraction of each run discarded as burn-in (when above the minimum).
pub const BURN_IN_FRACTION: f64 = 0.2;
/// Width of the statistical decision band, in standard errors.
pub const SE_BAND: f64 = 3.0;

fn subset_jump(spec: &ModelSpec, subset: &[usize]) -> Result<WeightFunction> {
    if subset.is_empty() {
        return Err(Error::Shape("constraint subset must be nonempty".into()));
    }
    if let Some(&index) = subset.iter().find(|&&k| k >= spec.q) {
        return Err(Error::InvalidIndex { index, q: spec.q });
    }
    Ok(WeightFunction(
        spec.jumps
            .iter()
            .map(|row| subset.iter().map(|&k| row[k]).sum::<i64>() as f64)
            .collect(),
    ))
}

/// `(J^𝒥)^T (Id - ℵ)^{-1} μ0` with `J^𝒥(i) = Σ_{k∈𝒥} J_k(i)`.
pub fn drift_indicator(spec: &ModelSpec, subset: &[usize]) -> Result<f64> {
    let w = subset_jump(spec, subset)?;
    let rates = linalg::mean_rates(&spec.fertility, &spec.mu0)?;
    Ok(w.0.iter().zip(&rates).map(|(a, r)| a * r).sum())
}

/// Stationary mean of `w_o(I)` for the unconstrained embedded chain:
/// `w^T (Id-ℵ)^{-1} μ0 / (μ0^0 + 1^T (Id-ℵ)^{-1} μ0)`.
pub fn unconstrained_mark_moment(spec: &ModelSpec, w: &WeightFunction) -> Result<f64> {
    w.check_len(spec.p)?;
    let rates = linalg::mean_rates(&spec.fertility, &spec.mu0)?;
    let num: f64 = w.0.iter().zip(&rates).map(|(a, r)| a * r).sum();
    let den = spec.mu0_null + rates.iter().sum::<f64>();
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Negative,
    Positive,
    Inconclusive,
}

impl Verdict {
    /// Sign verdict with a `band`-wide dead zone around zero.
    pub fn from_estimate(value: f64, band: f64) -> Self {
        if value + band < 0.0 {
            Verdict::Negative
        } else if value - band > 0.0 {
            Verdict::Positive
        } else {
            Verdict::Inconclusive
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Negative => "negative",
            Verdict::Positive => "positive",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Analytic drift indicator for one constraint subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEntry {
    /// 1-based constraint indices.
    pub subset: Vec<usize>,
    pub value: f64,
    pub verdict: Verdict,
}

/// Monte-Carlo estimate of the stationary mean of `J^𝒥(I)` under the
/// chain restricted to the constraints `𝒥'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCondition {
    /// `𝒥`, 1-based.
    pub subset: Vec<usize>,
    /// `𝒥'`, 1-based.
    pub kept: Vec<usize>,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub verdict: Verdict,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub events_per_run: u64,
    pub replications: u32,
    pub seed: u64,
    /// Batches per replication for the standard error.
    pub batches: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            events_per_run: 200_000,
            replications: 4,
            seed: 0,
            batches: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionReport {
    pub drift_indicators: Vec<DriftEntry>,
    pub mc_conditions: Vec<McCondition>,
    /// Subsets (1-based) whose conditions all came out negative.
    pub certified: Vec<Vec<usize>>,
}

fn mask_members(mask: u32, q: usize) -> Vec<usize> {
    (0..q).filter(|k| mask & (1 << k) != 0).collect()
}

fn one_based(members: &[usize]) -> Vec<usize> {
    members.iter().map(|k| k + 1).collect()
}

/// Per-batch mark counts of one restricted chain, pooled over replications.
struct MarkBatches {
    batch_len: usize,
    counts: Vec<Vec<u64>>,
}

impl MarkBatches {
    fn estimate(&self, w: &WeightFunction) -> (f64, f64) {
        let means: Vec<f64> = self
            .counts
            .iter()
            .map(|c| c.iter().enumerate().map(|(m, &n)| w.at(m) * n as f64).sum::<f64>() / self.batch_len as f64)
            .collect();
        crate::stats::mean_se(&means)
    }
}

fn burn_in(events: u64) -> u64 {
    ((events as f64 * BURN_IN_FRACTION) as u64).max(MIN_BURN_IN)
}

fn simulate_batches(spec: &ModelSpec, mask: u32, mc: &McConfig) -> Result<MarkBatches> {
    let burn = burn_in(mc.events_per_run);
    let kept = mc.events_per_run.saturating_sub(burn);
    let batches = mc.batches.max(2);
    if kept < 10 * batches as u64 {
        return Err(Error::InsufficientData(format!(
            "{} events per run leave {kept} after burn-in of {burn}; need at least {}",
            mc.events_per_run,
            10 * batches
        )));
    }
    let batch_len = (kept / batches as u64) as usize;
    let reduced = keep_constraints(spec, &mask_members(mask, spec.q))?;
    let init = ChainState::default_for(&reduced);
    let per_rep: Vec<Result<Vec<Vec<u64>>>> = (0..mc.replications.max(1))
        .into_par_iter()
        .map(|rep| {
            let mut rng = PathRng::new(mc.seed, stream_id(mask, rep));
            let mut sampler = Sampler::new(&reduced, init.clone())?;
            for _ in 0..burn {
                sampler.advance(&mut rng)?;
            }
            let mut out = Vec::with_capacity(batches);
            for _ in 0..batches {
                let mut counts = vec![0u64; reduced.p + 1];
                for _ in 0..batch_len {
                    counts[sampler.advance(&mut rng)?.mark] += 1;
                }
                out.push(counts);
            }
            Ok(out)
        })
        .collect();
    let mut counts = Vec::new();
    for r in per_rep {
        counts.extend(r?);
    }
    Ok(MarkBatches { batch_len, counts })
}

fn analytic_verdict(spec: &ModelSpec, subset: &[usize], value: f64) -> Result<Verdict> {
    // treat round-off around an exactly balanced drift as zero
    let w = subset_jump(spec, subset)?;
    let rates = linalg::mean_rates(&spec.fertility, &spec.mu0)?;
    let scale: f64 = w.0.iter().zip(&rates).map(|(a, r)| (a * r).abs()).sum();
    Ok(Verdict::from_estimate(value, 1e-12 * scale))
}

/// Runs the size-ordered checks over all nonempty constraint subsets.
pub fn check_induction(spec: &ModelSpec, mc: &McConfig) -> Result<InductionReport> {
    let q = spec.q;
    if q > 16 {
        return Err(Error::Shape(format!("q = {q} is too large for subset enumeration")));
    }
    let rho = spectral_radius(&spec.fertility);
    if rho >= 1.0 {
        return Err(Error::NotSubcritical(rho));
    }
    let mut masks: Vec<u32> = (1..(1u32 << q)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut certified = vec![false; 1 << q];
    let mut chains: Vec<Option<MarkBatches>> = (0..(1usize << q)).map(|_| None).collect();
    let mut drift_indicators = Vec::new();
    let mut mc_conditions = Vec::new();

    for size in 1..=q as u32 {
        // chains for every certified subset one size down
        let needed: Vec<u32> = masks
            .iter()
            .copied()
            .filter(|&m| m.count_ones() == size - 1 && m != 0 && certified[m as usize])
            .collect();
        let sims: Vec<(u32, Result<MarkBatches>)> = needed
            .par_iter()
            .map(|&m| (m, simulate_batches(spec, m, mc)))
            .collect();
        for (m, sim) in sims {
            chains[m as usize] = Some(sim?);
        }

        for &mask in masks.iter().filter(|m| m.count_ones() == size) {
            let members = mask_members(mask, q);
            let value = drift_indicator(spec, &members)?;
            let verdict = analytic_verdict(spec, &members, value)?;
            drift_indicators.push(DriftEntry {
                subset: one_based(&members),
                value,
                verdict,
            });
            let mut all_negative = verdict == Verdict::Negative;
            let w = subset_jump(spec, &members)?;

            let mut sub = (mask - 1) & mask;
            let mut subs = Vec::new();
            while sub != 0 {
                subs.push(sub);
                sub = (sub - 1) & mask;
            }
            subs.sort_by_key(|m| (m.count_ones(), *m));
            for kept in subs {
                let kept_members = mask_members(kept, q);
                let cond = match &chains[kept as usize] {
                    Some(batches) if certified[kept as usize] => {
                        let (est, se) = batches.estimate(&w);
                        McCondition {
                            subset: one_based(&members),
                            kept: one_based(&kept_members),
                            estimate: Some(est),
                            se: Some(se),
                            verdict: Verdict::from_estimate(est, SE_BAND * se),
                            note: None,
                        }
                    }
                    _ => McCondition {
                        subset: one_based(&members),
                        kept: one_based(&kept_members),
                        estimate: None,
                        se: None,
                        verdict: Verdict::Inconclusive,
                        note: Some(format!(
                            "restricted chain {:?} not certified ergodic",
                            one_based(&kept_members)
                        )),
                    },
                };
                all_negative &= cond.verdict == Verdict::Negative;
                mc_conditions.push(cond);
            }
            certified[mask as usize] = all_negative;
        }
    }

    let certified = masks
        .iter()
        .filter(|&&m| certified[m as usize])
        .map(|&m| one_based(&mask_members(m, q)))
        .collect();
    Ok(InductionReport {
        drift_indicators,
        mc_conditions,
        certified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    GeometricallyErgodic,
    Transient,
    Inconclusive,
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassKind::GeometricallyErgodic => "geometrically-ergodic",
            ClassKind::Transient => "transient",
            ClassKind::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: ClassKind,
    /// Conditions checked, in order; the last entry names the deciding or
    /// blocking condition.
    pub trail: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub spectral_radius: f64,
    pub min_singular_value: f64,
    pub invertible: bool,
    pub u: Option<Vec<f64>>,
    pub mean_rates: Option<Vec<f64>>,
    pub drift_indicators: Vec<DriftEntry>,
    pub mc_conditions: Vec<McCondition>,
    /// `None` when `q = 0`.
    pub access: Option<AccessVerdict>,
    pub classification: Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub k: i64,
    pub max_len: usize,
    pub mc: McConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            k: 5,
            max_len: 64,
            mc: McConfig::default(),
        }
    }
}

/// Computes every part of the report, then classifies.
pub fn analyze(spec: &ModelSpec, cfg: &CheckConfig) -> Result<ErgodicityReport> {
    let rho = spectral_radius(&spec.fertility);
    let (min_sv, _) = linalg::singular_value_range(&spec.fertility);
    let invertible = linalg::is_invertible(&spec.fertility);
    let access = if spec.q == 0 {
        None
    } else {
        Some(check_access(spec, cfg.k, cfg.max_len)?)
    };
    let mut report = ErgodicityReport {
        spectral_radius: rho,
        min_singular_value: min_sv,
        invertible,
        u: None,
        mean_rates: None,
        drift_indicators: Vec::new(),
        mc_conditions: Vec::new(),
        access,
        classification: Classification {
            kind: ClassKind::Inconclusive,
            trail: Vec::new(),
        },
    };
    if rho < 1.0 {
        report.u = Some(branching_vector(&spec.fertility)?);
        report.mean_rates = Some(linalg::mean_rates(&spec.fertility, &spec.mu0)?);
        if spec.q > 0 {
            let ind = check_induction(spec, &cfg.mc)?;
            report.drift_indicators = ind.drift_indicators;
            report.mc_conditions = ind.mc_conditions;
        }
    }
    report.classification = classify(spec, &report);
    Ok(report)
}

/// Applies the ergodicity and transience criteria to a computed report.
pub fn classify(spec: &ModelSpec, report: &ErgodicityReport) -> Classification {
    let mut trail = Vec::new();
    let done = |kind, trail| Classification { kind, trail };

    if report.spectral_radius >= 1.0 {
        trail.push(format!("spectral radius {:.6} >= 1: not subcritical", report.spectral_radius));
        return done(ClassKind::Inconclusive, trail);
    }
    trail.push(format!("spectral radius {:.6} < 1", report.spectral_radius));

    if spec.q == 1 {
        if let Some(d) = report.drift_indicators.first() {
            if d.verdict == Verdict::Positive {
                trail.push(format!("drift indicator {:.6e} > 0: transient", d.value));
                return done(ClassKind::Transient, trail);
            }
        }
    }

    let mut blocked = false;
    if report.invertible {
        trail.push(format!("fertility invertible (min singular value {:.3e})", report.min_singular_value));
    } else {
        trail.push(format!("fertility singular (min singular value {:.3e})", report.min_singular_value));
        blocked = true;
    }
    match &report.access {
        None => {}
        Some(AccessVerdict::Success { s_o, m, .. }) => {
            trail.push(format!("admissible paths to s_o = {s_o:?} with m = {m}"));
        }
        Some(AccessVerdict::Failure { unreachable, reason }) => {
            trail.push(format!("admissible-path search failed at {unreachable:?}: {reason}"));
            blocked = true;
        }
        Some(AccessVerdict::Inconclusive { reason }) => {
            trail.push(format!("admissible-path search inconclusive: {reason}"));
            blocked = true;
        }
    }
    for d in &report.drift_indicators {
        if d.verdict == Verdict::Negative {
            trail.push(format!("drift indicator {:?} = {:.6e} < 0", d.subset, d.value));
        } else {
            trail.push(format!("drift indicator {:?} = {:.6e} is {}", d.subset, d.value, d.verdict));
            blocked = true;
        }
    }
    for c in &report.mc_conditions {
        match (c.verdict, c.estimate, c.se) {
            (Verdict::Negative, Some(e), Some(se)) => {
                trail.push(format!("stationary drift of {:?} under {:?}: {e:.4e} ± {se:.1e} < 0", c.subset, c.kept));
            }
            _ => {
                trail.push(format!(
                    "stationary drift of {:?} under {:?} is {}{}",
                    c.subset,
                    c.kept,
                    c.verdict,
                    c.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()
                ));
                blocked = true;
            }
        }
    }
    if blocked {
        done(ClassKind::Inconclusive, trail)
    } else {
        trail.push("all conditions hold: geometrically ergodic".into());
        done(ClassKind::GeometricallyErgodic, trail)
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for ErgodicityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:.10}", "spectral radius", self.spectral_radius)?;
        writeln!(f, "{:<28} {} ({:.3e})", "fertility invertible", self.invertible, self.min_singular_value)?;
        if let Some(u) = &self.u {
            writeln!(f, "{:<28} {}", "u", fmt_vec(u))?;
        }
        if let Some(r) = &self.mean_rates {
            writeln!(f, "{:<28} {}", "unconstrained rates", fmt_vec(r))?;
        }
        match &self.access {
            None => {}
            Some(AccessVerdict::Success { s_o, m, .. }) => writeln!(f, "{:<28} ok, s_o = {s_o:?}, m = {m}", "admissible paths")?,
            Some(AccessVerdict::Failure { unreachable, .. }) => {
                writeln!(f, "{:<28} failed at {unreachable:?}", "admissible paths")?
            }
            Some(AccessVerdict::Inconclusive { reason }) => writeln!(f, "{:<28} inconclusive ({reason})", "admissible paths")?,
        }
        if !self.drift_indicators.is_empty() {
            writeln!(f, "\n{:<16} {:>16} {:>14}", "subset", "indicator", "verdict")?;
            for d in &self.drift_indicators {
                writeln!(f, "{:<16} {:>16.8e} {:>14}", format!("{:?}", d.subset), d.value, d.verdict)?;
            }
        }
        if !self.mc_conditions.is_empty() {
            writeln!(f, "\n{:<16} {:<12} {:>14} {:>12} {:>14}", "subset", "kept", "estimate", "se", "verdict")?;
            for c in &self.mc_conditions {
                let est = c.estimate.map_or("-".into(), |e| format!("{e:.6e}"));
                let se = c.se.map_or("-".into(), |e| format!("{e:.2e}"));
                writeln!(
                    f,
                    "{:<16} {:<12} {:>14} {:>12} {:>14}",
                    format!("{:?}", c.subset),
                    format!("{:?}", c.kept),
                    est,
                    se,
                    c.verdict
                )?;
            }
        }
        writeln!(f, "\nclassification: {}", self.classification.kind)?;
        for line in &self.classification.trail {
            writeln!(f, "  - {line}")?;
        }
        Ok(())
    }
}
