//! Exact simulation of the embedded chain `(Δ_n, I_n, S_n, λ_n)`.
//!
//! The first arrival after `T_n` is sampled by composition: the total
//! hazard `Hr(u) = a + b e^{-βu}` is inverted against a unit exponential,
//! then the mark is drawn from `Hr_i(Δ) / Hr(Δ)`. Blocked marks hand their
//! hazard to mark 0, so the total does not depend on `S`. Each event uses
//! exactly two uniforms from the path's [`PathRng`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, WeightFunction};
use crate::rng::PathRng;

const NEWTON_CAP: usize = 200;
const BISECTION_CAP: usize = 400;

/// Markov state `X_n = (S_n, λ_n)` together with the chain time `T_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub s: Vec<i64>,
    pub lambda: Vec<f64>,
    pub t: f64,
}

impl ChainState {
    /// Empty history (`λ = 0`) at time 0 with the given constraint value.
    pub fn at_rest(spec: &ModelSpec, s: Vec<i64>) -> Self {
        Self {
            s,
            lambda: vec![0.0; spec.p],
            t: 0.0,
        }
    }

    /// Empty history started from [`ModelSpec::free_corner`].
    pub fn default_for(spec: &ModelSpec) -> Self {
        Self::at_rest(spec, spec.free_corner())
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.s.len() != spec.q || self.lambda.len() != spec.p {
            return Err(Error::Shape(format!(
                "state has |S| = {}, |λ| = {}; model has q = {}, p = {}",
                self.s.len(),
                self.lambda.len(),
                spec.q,
                spec.p
            )));
        }
        if self.s.iter().any(|&v| v < 1) {
            return Err(Error::StatePositivity {
                event: 0,
                state: self.s.clone(),
            });
        }
        if self.lambda.iter().any(|&l| !(l.is_finite() && l >= 0.0)) || !self.t.is_finite() {
            return Err(Error::Shape("state intensities must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: u64,
    pub time: f64,
    pub delta: f64,
    /// `0` for auxiliary arrivals, `1..=p` otherwise.
    pub mark: usize,
}

/// Output of [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub spec_hash: String,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    pub stream: u64,
    pub initial: ChainState,
    pub events: Vec<Event>,
    /// State after each event, aligned with `events`.
    pub snapshots: Option<Vec<ChainState>>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.initial.t
    }

    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(self.initial.t, |e| e.time)
    }

    /// CSV `n,time,delta,mark[,S_1..S_q,lambda_1..lambda_p]`; the state
    /// columns are written when snapshots are present.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let snaps = self.snapshots.as_deref();
        let mut header = String::from("n,time,delta,mark");
        if snaps.is_some() {
            for k in 1..=self.q {
                header.push_str(&format!(",S_{k}"));
            }
            for i in 1..=self.p {
                header.push_str(&format!(",lambda_{i}"));
            }
        }
        writeln!(out, "{header}")?;
        for (k, ev) in self.events.iter().enumerate() {
            let mut line = format!(
                "{},{},{},{}",
                ev.index,
                fmt17(ev.time),
                fmt17(ev.delta),
                ev.mark
            );
            if let Some(snaps) = snaps {
                let st = &snaps[k];
                for v in &st.s {
                    line.push_str(&format!(",{v}"));
                }
                for l in &st.lambda {
                    line.push(',');
                    line.push_str(&fmt17(*l));
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// 17 significant decimal digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `(a, b)` with total hazard `Hr(u) = a + b e^{-βu}`.
#[inline]
pub fn total_hazard_params(state: &ChainState, spec: &ModelSpec) -> (f64, f64) {
    let a = spec.mu0_null + spec.mu0.iter().sum::<f64>();
    let b = state.lambda.iter().sum::<f64>();
    (a, b)
}

/// Integrated total hazard `Λ(Δ) = aΔ + (b/β)(1 - e^{-βΔ})`.
#[inline]
pub fn integrated_hazard(a: f64, b: f64, beta: f64, delta: f64) -> f64 {
    a * delta - b / beta * (-beta * delta).exp_m1()
}

/// Solves `Λ(Δ) = e` for `Δ`.
///
/// Newton from the left end of the bracket `[e/(a+b), e/a]`; Λ is
/// increasing and concave so the iterates stay in the bracket, but any
/// step leaving it is replaced by bisection, and a pure bisection phase
/// follows the Newton cap.
pub fn sample_interarrival(a: f64, b: f64, beta: f64, e: f64) -> Result<f64> {
    if b == 0.0 {
        return Ok(e / a);
    }
    let tol = 1e-10 * e.max(1.0);
    let mut lo = e / (a + b);
    let mut hi = e / a;
    let mut x = lo;
    for _ in 0..NEWTON_CAP {
        let f = integrated_hazard(a, b, beta, x) - e;
        if f.abs() <= tol {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = a + b * (-beta * x).exp();
        let next = x - f / slope;
        x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    for _ in 0..BISECTION_CAP {
        x = 0.5 * (lo + hi);
        let f = integrated_hazard(a, b, beta, x) - e;
        if f.abs() <= tol {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    Err(Error::NonConvergence { a, b, beta, e })
}

/// Hazard rates `Hr_0(Δ), …, Hr_p(Δ)` at the current state.
pub fn hazard_rates(state: &ChainState, delta: f64, spec: &ModelSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.p + 1];
    fill_hazards(&mut out, state, (-spec.beta * delta).exp(), spec);
    out
}

#[inline]
fn fill_hazards(out: &mut [f64], state: &ChainState, decay: f64, spec: &ModelSpec) {
    out[0] = spec.mu0_null;
    for i in 1..=spec.p {
        let h = spec.mu0[i - 1] + state.lambda[i - 1] * decay;
        if spec.is_blocked(i, &state.s) {
            out[0] += h;
            out[i] = 0.0;
        } else {
            out[i] = h;
        }
    }
}

/// `P(I = i | Δ)` for `i = 0..=p`.
pub fn mark_probabilities(state: &ChainState, delta: f64, spec: &ModelSpec) -> Vec<f64> {
    let mut h = hazard_rates(state, delta, spec);
    let total: f64 = h.iter().sum();
    for v in &mut h {
        *v /= total;
    }
    h
}

/// Picks the index whose cumulative hazard first exceeds `u * total`.
/// Zero-hazard marks can never be selected.
#[inline]
fn select_mark(hazards: &[f64], u: f64) -> usize {
    let total: f64 = hazards.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &h) in hazards.iter().enumerate() {
        if h > 0.0 {
            acc += h;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// In-place chain driver; [`step`] and [`simulate`] are built on it.
#[derive(Debug)]
pub struct Sampler<'a> {
    spec: &'a ModelSpec,
    state: ChainState,
    base_rate: f64,
    hazards: Vec<f64>,
    count: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(spec: &'a ModelSpec, init: ChainState) -> Result<Self> {
        init.check(spec)?;
        Ok(Self {
            spec,
            base_rate: spec.mu0_null + spec.mu0.iter().sum::<f64>(),
            state: init,
            hazards: vec![0.0; spec.p + 1],
            count: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn into_state(self) -> ChainState {
        self.state
    }

    /// Draws the next inter-arrival time and mark without applying them.
    #[inline]
    fn draw(&mut self, rng: &mut PathRng) -> Result<(f64, usize, f64)> {
        let e = rng.exp1();
        let u = rng.open01();
        let b: f64 = self.state.lambda.iter().sum();
        let delta = sample_interarrival(self.base_rate, b, self.spec.beta, e)?;
        let decay = (-self.spec.beta * delta).exp();
        fill_hazards(&mut self.hazards, &self.state, decay, self.spec);
        Ok((delta, select_mark(&self.hazards, u), decay))
    }

    #[inline]
    fn apply(&mut self, delta: f64, mark: usize, decay: f64) -> Result<Event> {
        let spec = self.spec;
        for l in &mut self.state.lambda {
            *l *= decay;
        }
        if mark > 0 {
            for (i, l) in self.state.lambda.iter_mut().enumerate() {
                *l += spec.beta * spec.fertility[i][mark - 1];
            }
            for (s, j) in self.state.s.iter_mut().zip(&spec.jumps[mark - 1]) {
                *s += j;
            }
        }
        self.count += 1;
        self.state.t += delta;
        if self.state.s.iter().any(|&v| v < 1) {
            return Err(Error::StatePositivity {
                event: self.count,
                state: self.state.s.clone(),
            });
        }
        Ok(Event {
            index: self.count,
            time: self.state.t,
            delta,
            mark,
        })
    }

    /// Advances one event.
    pub fn advance(&mut self, rng: &mut PathRng) -> Result<Event> {
        let (delta, mark, decay) = self.draw(rng)?;
        self.apply(delta, mark, decay)
    }

    /// Advances one event unless it would land after `horizon`.
    pub fn advance_until(&mut self, rng: &mut PathRng, horizon: f64) -> Result<Option<Event>> {
        let (delta, mark, decay) = self.draw(rng)?;
        if self.state.t + delta > horizon {
            return Ok(None);
        }
        self.apply(delta, mark, decay).map(Some)
    }
}

/// One transition of the chain from `state`.
pub fn step(state: &ChainState, spec: &ModelSpec, rng: &mut PathRng) -> Result<(Event, ChainState)> {
    let mut sampler = Sampler::new(spec, state.clone())?;
    let ev = sampler.advance(rng)?;
    Ok((ev, sampler.into_state()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    /// Stop after this many events.
    Events(u64),
    /// Keep events with `T_n <= horizon`.
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSeed {
    pub seed: u64,
    pub stream: u64,
}

impl PathSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }
}

/// Runs the chain from `init` until `stop`.
pub fn simulate(
    spec: &ModelSpec,
    init: &ChainState,
    stop: StopRule,
    seed: PathSeed,
    snapshots: bool,
) -> Result<EventLog> {
    let mut rng = PathRng::new(seed.seed, seed.stream);
    let mut sampler = Sampler::new(spec, init.clone())?;
    let mut events = Vec::new();
    let mut snaps = snapshots.then(Vec::new);
    let mut push = |ev: Event, st: &ChainState, events: &mut Vec<Event>| {
        events.push(ev);
        if let Some(s) = snaps.as_mut() {
            s.push(st.clone());
        }
    };
    match stop {
        StopRule::Events(n) => {
            events.reserve(n as usize);
            for _ in 0..n {
                let ev = sampler.advance(&mut rng)?;
                push(ev, sampler.state(), &mut events);
            }
        }
        StopRule::Horizon(horizon) => {
            while let Some(ev) = sampler.advance_until(&mut rng, horizon)? {
                push(ev, sampler.state(), &mut events);
            }
        }
    }
    Ok(EventLog {
        spec_hash: spec.hash(),
        p: spec.p,
        q: spec.q,
        seed: seed.seed,
        stream: seed.stream,
        initial: init.clone(),
        events,
        snapshots: snaps,
    })
}

/// `λ(t)` interpolated between events: `λ_n e^{-β(t - T_n)}` on `[T_n, T_{n+1})`.
pub fn intensity_at(log: &EventLog, spec: &ModelSpec, t: f64) -> Result<Vec<f64>> {
    let snaps = log.snapshots.as_ref().ok_or(Error::SnapshotsDisabled)?;
    let (start, end) = (log.start_time(), log.end_time());
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let n = log.events.partition_point(|e| e.time <= t);
    let (base, t_n) = if n == 0 {
        (&log.initial.lambda, log.initial.t)
    } else {
        (&snaps[n - 1].lambda, log.events[n - 1].time)
    };
    let decay = (-spec.beta * (t - t_n)).exp();
    Ok(base.iter().map(|l| l * decay).collect())
}

/// `N(1_{(u,t]} ⊗ w) = Σ_{u < T_k <= t} w_o(I_k)`.
pub fn counting_functional(log: &EventLog, w: &WeightFunction, u: f64, t: f64) -> f64 {
    let lo = log.events.partition_point(|e| e.time <= u);
    let hi = log.events.partition_point(|e| e.time <= t);
    if hi <= lo {
        return 0.0;
    }
    log.events[lo..hi].iter().map(|e| w.at(e.mark)).sum()
}

/// Drops the constraint components listed in `remove` (0-based) together
/// with their sets and jump columns. Removing every component yields the
/// unconstrained model; keeping a subset `K` is `reduce_constraints` by
/// the complement of `K`.
pub fn reduce_constraints(spec: &ModelSpec, remove: &[usize]) -> Result<ModelSpec> {
    if let Some(&index) = remove.iter().find(|&&k| k >= spec.q) {
        return Err(Error::InvalidIndex { index, q: spec.q });
    }
    let keep: Vec<usize> = (0..spec.q).filter(|k| !remove.contains(k)).collect();
    let mut out = spec.clone();
    out.q = keep.len();
    out.constraints = spec
        .constraints
        .iter()
        .map(|sets| keep.iter().map(|&k| sets[k].clone()).collect())
        .collect();
    out.jumps = spec
        .jumps
        .iter()
        .map(|row| keep.iter().map(|&k| row[k]).collect())
        .collect();
    Ok(out)
}

/// Keeps only the listed components (0-based).
pub fn keep_constraints(spec: &ModelSpec, keep: &[usize]) -> Result<ModelSpec> {
    if let Some(&index) = keep.iter().find(|&&k| k >= spec.q) {
        return Err(Error::InvalidIndex { index, q: spec.q });
    }
    let remove: Vec<usize> = (0..spec.q).filter(|k| !keep.contains(k)).collect();
    reduce_constraints(spec, &remove)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lob_preset, scaled_identity4};
    use std::collections::BTreeSet;

    fn poisson1() -> ModelSpec {
        ModelSpec::unconstrained(1.0, 1.0, vec![1.0], vec![vec![0.0]]).unwrap()
    }

    fn lob() -> ModelSpec {
        lob_preset([0.1, 0.2, 0.2, 0.1], scaled_identity4(0.1), 1.0, 1.0).unwrap()
    }

    fn state(spec: &ModelSpec, s: Vec<i64>, lambda: Vec<f64>) -> ChainState {
        let st = ChainState { s, lambda, t: 0.0 };
        st.check(spec).unwrap();
        st
    }

    #[test]
    fn hazard_params_direct_sums() {
        let spec = poisson1();
        assert_eq!(total_hazard_params(&state(&spec, vec![], vec![1.0]), &spec), (2.0, 1.0));
        assert_eq!(total_hazard_params(&state(&spec, vec![], vec![0.0]), &spec), (2.0, 0.0));
        let spec2 = ModelSpec::unconstrained(1.0, 1.0, vec![0.5, 0.5], vec![vec![0.0; 2]; 2]).unwrap();
        let (a, b) = total_hazard_params(&state(&spec2, vec![], vec![0.3, 0.7]), &spec2);
        assert_eq!(a, 2.0);
        assert!((b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interarrival_pure_exponential() {
        assert_eq!(sample_interarrival(2.0, 0.0, 1.0, 0.7).unwrap(), 0.35);
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(sample_interarrival(1.0, 0.0, 1.0, ln2).unwrap(), ln2);
    }

    #[test]
    fn interarrival_regression_root() {
        // Root of Δ + 1 - e^{-Δ} = 1, i.e. Δ = e^{-Δ}; frozen from a
        // 200-step bisection on [0, 1].
        let frozen = 0.567_143_290_409_783_7;
        let got = sample_interarrival(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((got - frozen).abs() < 1e-10, "{got}");
    }

    #[test]
    fn poisson_mark_probabilities() {
        let spec = poisson1();
        let p = mark_probabilities(&state(&spec, vec![], vec![1.0]), 0.0, &spec);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        let spec2 = ModelSpec::unconstrained(1.0, 1.0, vec![1.0, 1.0], vec![vec![0.0; 2]; 2]).unwrap();
        for d in [0.0, 0.5, 3.0] {
            let p = mark_probabilities(&state(&spec2, vec![], vec![0.0, 0.0]), d, &spec2);
            for v in p {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn all_blocked_goes_to_mark_zero() {
        let mut spec = lob();
        for sets in spec.constraints.iter_mut() {
            sets[0] = BTreeSet::from([1, 2, 3]);
        }
        let p = mark_probabilities(&state(&spec, vec![2], vec![0.5; 4]), 0.3, &spec);
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn lob_tight_spread_blocks_marks_2_and_3() {
        let spec = lob();
        let st = state(&spec, vec![1], vec![0.4, 0.3, 0.2, 0.1]);
        let p = mark_probabilities(&st, 0.2, &spec);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[3], 0.0);
        let mut rng = PathRng::new(5, 0);
        for _ in 0..2_000 {
            let (ev, next) = step(&st, &spec, &mut rng).unwrap();
            assert!(ev.mark != 2 && ev.mark != 3);
            assert!(next.s[0] >= 1);
        }
    }

    #[test]
    fn mark_zero_only_decays() {
        // Every arrival is mark 0 when the only real mark is always blocked.
        let mut spec = lob();
        for sets in spec.constraints.iter_mut() {
            sets[0] = (1..=10).collect();
        }
        let st = state(&spec, vec![3], vec![0.4, 0.3, 0.2, 0.1]);
        let mut rng = PathRng::new(9, 0);
        let (ev, next) = step(&st, &spec, &mut rng).unwrap();
        assert_eq!(ev.mark, 0);
        assert_eq!(next.s, st.s);
        for (l1, l0) in next.lambda.iter().zip(&st.lambda) {
            assert_eq!(*l1, l0 * (-spec.beta * ev.delta).exp());
        }
    }

    #[test]
    fn zero_fertility_only_decays() {
        let spec = lob_preset([0.3, 0.2, 0.2, 0.3], [[0.0; 4]; 4], 2.0, 1.0).unwrap();
        let mut st = state(&spec, vec![2], vec![0.4, 0.3, 0.2, 0.1]);
        let mut rng = PathRng::new(1, 0);
        for _ in 0..50 {
            let (ev, next) = step(&st, &spec, &mut rng).unwrap();
            for (l1, l0) in next.lambda.iter().zip(&st.lambda) {
                assert_eq!(*l1, l0 * (-spec.beta * ev.delta).exp());
            }
            st = next;
        }
    }

    #[test]
    fn positivity_violation_is_reported() {
        let spec = ModelSpec::new(
            1.0,
            1.0,
            vec![5.0],
            vec![vec![0.0]],
            vec![vec![BTreeSet::new()]],
            vec![vec![-1]],
        )
        .unwrap();
        let err = simulate(&spec, &ChainState::at_rest(&spec, vec![2]), StopRule::Events(100), PathSeed::new(1, 0), false)
            .unwrap_err();
        assert!(matches!(err, Error::StatePositivity { .. }));
    }

    #[test]
    fn zero_events_gives_empty_log() {
        let spec = lob();
        let log = simulate(&spec, &ChainState::default_for(&spec), StopRule::Events(0), PathSeed::new(3, 0), true).unwrap();
        assert!(log.is_empty());
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,time,delta,mark,S_1,lambda_1,lambda_2,lambda_3,lambda_4\n");
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let spec = lob();
        let init = ChainState::default_for(&spec);
        let a = simulate(&spec, &init, StopRule::Events(500), PathSeed::new(42, 0), true).unwrap();
        let b = simulate(&spec, &init, StopRule::Events(500), PathSeed::new(42, 0), true).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec, &init, StopRule::Events(500), PathSeed::new(42, 1), true).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn horizon_stop_respects_horizon() {
        let spec = lob();
        let log = simulate(&spec, &ChainState::default_for(&spec), StopRule::Horizon(50.0), PathSeed::new(2, 0), false).unwrap();
        assert!(!log.is_empty());
        assert!(log.end_time() <= 50.0);
        assert!(log.events.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn intensity_interpolation() {
        let spec = lob();
        let init = ChainState {
            s: vec![2],
            lambda: vec![0.5, 0.0, 0.2, 0.1],
            t: 0.0,
        };
        let log = simulate(&spec, &init, StopRule::Events(40), PathSeed::new(8, 0), true).unwrap();
        let snaps = log.snapshots.as_ref().unwrap();
        for (k, ev) in log.events.iter().enumerate().take(39) {
            assert_eq!(intensity_at(&log, &spec, ev.time).unwrap(), snaps[k].lambda);
            let half = ev.time + std::f64::consts::LN_2 / spec.beta;
            if half < log.events[k + 1].time {
                let got = intensity_at(&log, &spec, half).unwrap();
                for (g, l) in got.iter().zip(&snaps[k].lambda) {
                    assert!((g - l / 2.0).abs() <= 1e-15 * l.max(1.0));
                }
            }
        }
        assert!(matches!(intensity_at(&log, &spec, log.end_time() + 1.0), Err(Error::OutOfRange { .. })));
        let bare = simulate(&spec, &init, StopRule::Events(5), PathSeed::new(8, 0), false).unwrap();
        assert!(matches!(intensity_at(&bare, &spec, 0.0), Err(Error::SnapshotsDisabled)));
    }

    #[test]
    fn intensity_stays_zero_without_fertility() {
        let spec = lob_preset([0.3, 0.2, 0.2, 0.3], [[0.0; 4]; 4], 1.0, 1.0).unwrap();
        let log = simulate(&spec, &ChainState::default_for(&spec), StopRule::Events(30), PathSeed::new(4, 0), true).unwrap();
        for t in [0.0, log.end_time() / 3.0, log.end_time()] {
            assert!(intensity_at(&log, &spec, t).unwrap().iter().all(|&l| l == 0.0));
        }
    }

    #[test]
    fn counting_functional_matches_spread() {
        let spec = lob();
        let init = ChainState::default_for(&spec);
        let log = simulate(&spec, &init, StopRule::Events(300), PathSeed::new(6, 0), true).unwrap();
        let w = WeightFunction::jump_column(&spec, 0);
        let snaps = log.snapshots.as_ref().unwrap();
        let (u_idx, t_idx) = (40, 250);
        let u = log.events[u_idx].time;
        let t = log.events[t_idx].time;
        let diff = counting_functional(&log, &w, u, t);
        assert_eq!(diff, (snaps[t_idx].s[0] - snaps[u_idx].s[0]) as f64);
        assert_eq!(counting_functional(&log, &w, u, u), 0.0);
        let ones = WeightFunction::ones(4);
        let real = log.events.iter().filter(|e| e.mark > 0).count() as f64;
        assert_eq!(counting_functional(&log, &ones, 0.0, log.end_time()), real);
    }

    #[test]
    fn reduce_constraints_projections() {
        let spec = lob();
        assert_eq!(reduce_constraints(&spec, &[]).unwrap(), spec);
        let full = reduce_constraints(&spec, &[0]).unwrap();
        assert_eq!(full.q, 0);
        assert!(full.constraints.iter().all(Vec::is_empty));
        assert!(full.jumps.iter().all(Vec::is_empty));
        assert!(full.check().is_ok());
        assert!(matches!(reduce_constraints(&spec, &[1]), Err(Error::InvalidIndex { .. })));

        let mut two = spec.clone();
        two.q = 2;
        for (i, sets) in two.constraints.iter_mut().enumerate() {
            sets.push(BTreeSet::from([i as i64 + 1]));
        }
        for row in two.jumps.iter_mut() {
            row.push(0);
        }
        let kept = reduce_constraints(&two, &[1]).unwrap();
        assert_eq!(kept, spec);
        assert_eq!(keep_constraints(&two, &[0]).unwrap(), spec);
    }
}
