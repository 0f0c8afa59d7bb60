//! Model parameterization: marks, constraint sets, jump map and the
//! exponential-kernel fertility matrix.
//!
//! Marks are numbered `1..=p`; mark `0` is reserved for the auxiliary
//! Poisson clock and for blocked-intensity mass. Every consumer uses the
//! extensions `J_o(0) = 0` and `w_o(0) = 0`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default rate of the auxiliary sampling clock.
pub const DEFAULT_MU0_NULL: f64 = 1.0;

fn default_mu0_null() -> f64 {
    DEFAULT_MU0_NULL
}

/// Full parameterization of a constrained Hawkes model.
///
/// `constraints[i][k]` is the set of values of `S_k` at which mark `i + 1`
/// is blocked; an empty set means component `k` never blocks that mark.
/// `jumps[i]` is the increment `J(i + 1)` applied to `S` by a mark `i + 1`
/// event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: usize,
    pub q: usize,
    pub beta: f64,
    #[serde(default = "default_mu0_null")]
    pub mu0_null: f64,
    pub mu0: Vec<f64>,
    pub fertility: Vec<Vec<f64>>,
    pub constraints: Vec<Vec<BTreeSet<i64>>>,
    pub jumps: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One finding from [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Checks every structural and numeric invariant of `spec`.
///
/// Errors and warnings are both returned; only errors make a spec unusable.
/// A warning is emitted when some mark with a negative jump in a component
/// is not blocked at the low values that jump would push below 1. Such
/// specs can still be simulated; positivity is then checked per event.
pub fn validate(spec: &ModelSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let p = spec.p;
    let q = spec.q;

    if p == 0 {
        out.push(Diagnostic::error("p must be positive"));
    }
    if !(spec.beta.is_finite() && spec.beta > 0.0) {
        out.push(Diagnostic::error("beta must be positive"));
    }
    if !(spec.mu0_null.is_finite() && spec.mu0_null > 0.0) {
        out.push(Diagnostic::error("mu0_null must be positive"));
    }

    if spec.mu0.len() != p {
        out.push(Diagnostic::error(format!(
            "mu0 shape mismatch: expected {p} entries, found {}",
            spec.mu0.len()
        )));
    }
    for (i, &m) in spec.mu0.iter().enumerate() {
        if !(m.is_finite() && m > 0.0) {
            out.push(Diagnostic::error(format!("mu0[{}] must be positive, got {m}", i + 1)));
        }
    }

    if spec.fertility.len() != p || spec.fertility.iter().any(|row| row.len() != p) {
        out.push(Diagnostic::error(format!(
            "fertility shape mismatch: expected {p}x{p}"
        )));
    }
    for (i, row) in spec.fertility.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                out.push(Diagnostic::error(format!(
                    "fertility[{}][{}] must be non-negative, got {a}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }

    if spec.constraints.len() != p {
        out.push(Diagnostic::error(format!(
            "constraints shape mismatch: expected {p} marks, found {}",
            spec.constraints.len()
        )));
    }
    for (i, sets) in spec.constraints.iter().enumerate() {
        if q == 0 && !sets.is_empty() {
            out.push(Diagnostic::error(format!(
                "q=0 forbids constraint sets (mark {} has {})",
                i + 1,
                sets.len()
            )));
            continue;
        }
        if sets.len() != q {
            out.push(Diagnostic::error(format!(
                "constraints shape mismatch: mark {} has {} components, expected {q}",
                i + 1,
                sets.len()
            )));
        }
        for (k, set) in sets.iter().enumerate() {
            if let Some(&v) = set.iter().find(|&&v| v < 1) {
                out.push(Diagnostic::error(format!(
                    "constraints[{}][{}] contains {v}; values must be >= 1",
                    i + 1,
                    k + 1
                )));
            }
        }
    }

    if spec.jumps.len() != p || spec.jumps.iter().any(|row| row.len() != q) {
        out.push(Diagnostic::error(format!("jumps shape mismatch: expected {p}x{q}")));
    }

    if out.iter().any(Diagnostic::is_error) {
        return out;
    }

    for (i, row) in spec.jumps.iter().enumerate() {
        for (k, &jump) in row.iter().enumerate() {
            if jump >= 0 {
                continue;
            }
            let set = &spec.constraints[i][k];
            if !(1..=-jump).all(|s| set.contains(&s)) {
                out.push(Diagnostic::warning(format!(
                    "mark {} moves S_{} by {jump} but is not blocked on 1..={}; \
                     positivity is only enforced at runtime",
                    i + 1,
                    k + 1,
                    -jump
                )));
            }
        }
    }
    out
}

impl ModelSpec {
    /// Builds a spec and rejects it if [`validate`] reports any error.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta: f64,
        mu0_null: f64,
        mu0: Vec<f64>,
        fertility: Vec<Vec<f64>>,
        constraints: Vec<Vec<BTreeSet<i64>>>,
        jumps: Vec<Vec<i64>>,
    ) -> Result<Self> {
        let p = mu0.len();
        let q = jumps.first().map_or(0, Vec::len);
        let spec = Self {
            p,
            q,
            beta,
            mu0_null,
            mu0,
            fertility,
            constraints,
            jumps,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Unconstrained (q = 0) model.
    pub fn unconstrained(beta: f64, mu0_null: f64, mu0: Vec<f64>, fertility: Vec<Vec<f64>>) -> Result<Self> {
        let p = mu0.len();
        Self::new(beta, mu0_null, mu0, fertility, vec![Vec::new(); p], vec![Vec::new(); p])
    }

    /// Returns `Err(Validation)` when any error-severity diagnostic exists.
    pub fn check(&self) -> Result<()> {
        let diags = validate(self);
        if diags.iter().any(Diagnostic::is_error) {
            Err(Error::Validation(diags.into_iter().filter(Diagnostic::is_error).collect()))
        } else {
            Ok(())
        }
    }

    /// Whether mark `mark` (1-based) is blocked at constraint value `s`.
    ///
    /// A mark is blocked as soon as one component of `s` lies in that
    /// component's set. With `q = 0` nothing is ever blocked.
    #[inline]
    pub fn is_blocked(&self, mark: usize, s: &[i64]) -> bool {
        if mark == 0 {
            return false;
        }
        self.constraints[mark - 1]
            .iter()
            .zip(s)
            .any(|(set, v)| set.contains(v))
    }

    /// `J_o(mark)`; `None` stands for the zero vector of mark 0.
    #[inline]
    pub fn jump(&self, mark: usize) -> Option<&[i64]> {
        if mark == 0 {
            None
        } else {
            Some(&self.jumps[mark - 1])
        }
    }

    /// Sum of all jump rows, `sum_i J(i)`.
    pub fn total_jump(&self) -> Vec<i64> {
        let mut out = vec![0; self.q];
        for row in &self.jumps {
            for (o, j) in out.iter_mut().zip(row) {
                *o += j;
            }
        }
        out
    }

    pub fn fertility_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.fertility[i][j])
    }

    /// Smallest state from which no mark is blocked: per component,
    /// one more than the largest value of any constraint set (1 when all
    /// sets are empty).
    pub fn free_corner(&self) -> Vec<i64> {
        (0..self.q)
            .map(|k| {
                1 + self
                    .constraints
                    .iter()
                    .filter_map(|sets| sets[k].iter().next_back().copied())
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Parses a model document and validates it.
pub fn load_spec(document: &str) -> Result<ModelSpec> {
    let mut spec: ModelSpec = serde_json::from_str(document).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if spec.q == 0 {
        if spec.constraints.is_empty() {
            spec.constraints = vec![Vec::new(); spec.p];
        }
        if spec.jumps.is_empty() {
            spec.jumps = vec![Vec::new(); spec.p];
        }
    }
    spec.check()?;
    Ok(spec)
}

pub fn save_spec(spec: &ModelSpec) -> String {
    serde_json::to_string_pretty(spec).expect("spec serializes")
}

/// Real-valued function on marks `1..=p`, extended by `w_o(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightFunction(pub Vec<f64>);

impl WeightFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Indicator of a single mark (1-based).
    pub fn indicator(p: usize, mark: usize) -> Self {
        let mut v = vec![0.0; p];
        v[mark - 1] = 1.0;
        Self(v)
    }

    pub fn ones(p: usize) -> Self {
        Self(vec![1.0; p])
    }

    /// Column `k` (0-based) of the jump matrix as a weight.
    pub fn jump_column(spec: &ModelSpec, k: usize) -> Self {
        Self(spec.jumps.iter().map(|row| row[k] as f64).collect())
    }

    /// Mid-price weights of the order-book preset.
    pub fn mid_price() -> Self {
        Self(LOB_MID_WEIGHTS.to_vec())
    }

    #[inline]
    pub fn at(&self, mark: usize) -> f64 {
        if mark == 0 {
            0.0
        } else {
            self.0[mark - 1]
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_len(&self, p: usize) -> Result<()> {
        if self.0.len() == p {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "weight function has {} entries, model has p = {p}",
                self.0.len()
            )))
        }
    }
}

/// Spread increments of the four order-book events:
/// ask up, ask down, bid up, bid down.
pub const LOB_JUMPS: [i64; 4] = [1, -1, -1, 1];
pub const LOB_MID_WEIGHTS: [f64; 4] = [0.5, -0.5, 0.5, -0.5];
pub const LOB_ASK_WEIGHTS: [f64; 4] = [1.0, -1.0, 0.0, 0.0];
pub const LOB_BID_WEIGHTS: [f64; 4] = [0.0, 0.0, 1.0, -1.0];

/// Best-bid/best-ask model: `p = 4`, `q = 1` (the spread), events 2 and 3
/// blocked at spread 1.
pub fn lob_preset(mu0: [f64; 4], fertility: [[f64; 4]; 4], beta: f64, mu0_null: f64) -> Result<ModelSpec> {
    let tight: BTreeSet<i64> = BTreeSet::from([1]);
    let constraints = vec![
        vec![BTreeSet::new()],
        vec![tight.clone()],
        vec![tight],
        vec![BTreeSet::new()],
    ];
    let jumps = LOB_JUMPS.iter().map(|&j| vec![j]).collect();
    ModelSpec::new(
        beta,
        mu0_null,
        mu0.to_vec(),
        fertility.iter().map(|r| r.to_vec()).collect(),
        constraints,
        jumps,
    )
}

/// `c * Id_4`, a convenient invertible fertility for the preset.
pub fn scaled_identity4(c: f64) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset() -> ModelSpec {
        lob_preset([0.1, 0.2, 0.2, 0.1], scaled_identity4(0.1), 1.0, 1.0).unwrap()
    }

    #[test]
    fn lob_preset_is_valid() {
        assert!(validate(&preset()).is_empty());
    }

    #[test]
    fn lob_preset_shape() {
        let s = preset();
        assert_eq!((s.p, s.q), (4, 1));
        assert!(s.constraints[0][0].is_empty());
        assert_eq!(s.constraints[1][0], BTreeSet::from([1]));
        assert_eq!(s.constraints[2][0], BTreeSet::from([1]));
        assert!(s.constraints[3][0].is_empty());
        let col: Vec<i64> = s.jumps.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![1, -1, -1, 1]);
        assert_eq!(WeightFunction::mid_price().0, vec![0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn zero_beta_is_rejected() {
        let mut s = preset();
        s.beta = 0.0;
        let d = validate(&s);
        assert!(d.iter().any(|d| d.is_error() && d.message == "beta must be positive"));
    }

    #[test]
    fn jumps_shape_mismatch() {
        let mut s = preset();
        s.jumps.pop();
        let d = validate(&s);
        assert!(d.iter().any(|d| d.message.starts_with("jumps shape mismatch")));
    }

    #[test]
    fn unguarded_negative_jump_warns() {
        let mut s = preset();
        s.constraints[1][0].clear();
        let d = validate(&s);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert!(s.check().is_ok());
    }

    #[test]
    fn round_trip_preset() {
        let s = preset();
        let doc = save_spec(&s);
        assert_eq!(load_spec(&doc).unwrap(), s);
    }

    #[test]
    fn missing_beta_names_field() {
        let doc = r#"{"p":1,"q":0,"mu0":[1.0],"fertility":[[0.0]],"constraints":[[]],"jumps":[[]]}"#;
        match load_spec(doc) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("beta"), "{message}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn q0_with_constraint_sets_fails_validation() {
        let doc = r#"{"p":1,"q":0,"beta":1.0,"mu0":[1.0],"fertility":[[0.0]],
                      "constraints":[[[1]]],"jumps":[[]]}"#;
        match load_spec(doc) {
            Err(Error::Validation(d)) => assert!(d.iter().any(|d| d.message.contains("q=0"))),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn q0_accepts_empty_arrays_and_default_mu0_null() {
        let doc = r#"{"p":2,"q":0,"beta":2.0,"mu0":[1.0,0.5],
                      "fertility":[[0.0,0.1],[0.2,0.0]],"constraints":[],"jumps":[]}"#;
        let s = load_spec(doc).unwrap();
        assert_eq!(s.mu0_null, 1.0);
        assert_eq!(s.constraints.len(), 2);
        assert!(!s.is_blocked(1, &[]));
    }

    #[test]
    fn blocking_is_per_component() {
        let mut s = preset();
        s.q = 2;
        for (i, row) in s.jumps.iter_mut().enumerate() {
            row.push(if i == 0 { 1 } else { 0 });
        }
        for sets in s.constraints.iter_mut() {
            sets.push(BTreeSet::new());
        }
        s.constraints[0][1] = BTreeSet::from([7]);
        assert!(s.check().is_ok());
        assert!(s.is_blocked(2, &[1, 3]));
        assert!(!s.is_blocked(2, &[2, 3]));
        assert!(s.is_blocked(1, &[5, 7]));
        assert_eq!(s.free_corner(), vec![2, 8]);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = preset();
        let mut b = preset();
        assert_eq!(a.hash(), b.hash());
        b.beta = 1.5;
        assert_ne!(a.hash(), b.hash());
    }
}
