//! Decision criteria over an outcome matrix: Hurwicz envelopes and their
//! α-breakpoints, Laplace, Wald and Savage, pairwise regret tables, and
//! penalty adjustment of cost matrices.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coincidence tolerance for non-integral inputs.
const FLOAT_TOL: f64 = 1e-9;

/// Largest magnitude treated exactly when every cell is integral.
const EXACT_LIMIT: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    GainHigherBetter,
    CostLowerBetter,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("outcome matrix needs at least {0} strategies")]
    TooFewStrategies(usize),
    #[error("outcome matrix has no scenarios")]
    NoScenarios,
    #[error("row {row} has {found} values for {expected} scenarios")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate label '{0}'")]
    DuplicateLabel(String),
    #[error("non-finite value for ({strategy}, {scenario})")]
    NonFinite { strategy: String, scenario: String },
    #[error("alpha {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
    #[error("penalties apply to cost matrices only")]
    OrientationMismatch,
    #[error("invalid penalty for {strategy}: {value}")]
    InvalidPenalty { strategy: String, value: f64 },
    #[error("malformed penalty list at '{0}': expected label=amount")]
    PenaltySyntax(String),
}

/// Value of each strategy under each scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub orientation: Orientation,
    pub strategies: Vec<String>,
    pub scenarios: Vec<String>,
    /// `values[s][σ]`.
    pub values: Vec<Vec<f64>>,
}

impl OutcomeMatrix {
    pub fn new(
        orientation: Orientation,
        strategies: Vec<String>,
        scenarios: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, RiskError> {
        if strategies.is_empty() {
            return Err(RiskError::TooFewStrategies(1));
        }
        if scenarios.is_empty() {
            return Err(RiskError::NoScenarios);
        }
        for labels in [&strategies, &scenarios] {
            let mut seen = std::collections::BTreeSet::new();
            for l in labels {
                if !seen.insert(l) {
                    return Err(RiskError::DuplicateLabel(l.clone()));
                }
            }
        }
        if values.len() != strategies.len() {
            return Err(RiskError::Dimension {
                row: values.len(),
                expected: strategies.len(),
                found: values.len(),
            });
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != scenarios.len() {
                return Err(RiskError::Dimension {
                    row: i,
                    expected: scenarios.len(),
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(RiskError::NonFinite {
                        strategy: strategies[i].clone(),
                        scenario: scenarios[j].clone(),
                    });
                }
            }
        }
        Ok(OutcomeMatrix {
            orientation,
            strategies,
            scenarios,
            values,
        })
    }

    pub fn index_of(&self, strategy: &str) -> Result<usize, RiskError> {
        self.strategies
            .iter()
            .position(|s| s == strategy)
            .ok_or_else(|| RiskError::UnknownStrategy(strategy.into()))
    }

    pub fn value(&self, strategy: &str, scenario: &str) -> Option<f64> {
        let i = self.strategies.iter().position(|s| s == strategy)?;
        let j = self.scenarios.iter().position(|s| s == scenario)?;
        Some(self.values[i][j])
    }

    /// Worst value of a row: minimum gain or maximum cost.
    pub fn worst(&self, i: usize) -> f64 {
        let row = &self.values[i];
        match self.orientation {
            Orientation::GainHigherBetter => row.iter().copied().fold(f64::INFINITY, f64::min),
            Orientation::CostLowerBetter => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn best(&self, i: usize) -> f64 {
        let row = &self.values[i];
        match self.orientation {
            Orientation::GainHigherBetter => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Orientation::CostLowerBetter => row.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn integral(&self) -> bool {
        self.values
            .iter()
            .flatten()
            .all(|v| v.fract() == 0.0 && v.abs() < EXACT_LIMIT)
    }

    /// `+1` when larger is better, `−1` otherwise.
    fn sign(&self) -> f64 {
        match self.orientation {
            Orientation::GainHigherBetter => 1.0,
            Orientation::CostLowerBetter => -1.0,
        }
    }

    /// Orders two values so that `Greater` means `a` is better.
    fn better(&self, a: f64, b: f64) -> Ordering {
        let o = a.total_cmp(&b);
        match self.orientation {
            Orientation::GainHigherBetter => o,
            Orientation::CostLowerBetter => o.reverse(),
        }
    }

    fn same(&self, a: f64, b: f64) -> bool {
        if self.integral() {
            a == b
        } else {
            (a - b).abs() <= FLOAT_TOL * a.abs().max(b.abs()).max(1.0)
        }
    }

    fn winners(&self, scores: &[f64], higher_is_better: bool) -> Vec<String> {
        let pick = |a: f64, b: f64| if higher_is_better { a.max(b) } else { a.min(b) };
        let best = scores.iter().copied().reduce(pick).unwrap_or(f64::NAN);
        self.strategies
            .iter()
            .zip(scores)
            .filter(|(_, &s)| self.same(s, best))
            .map(|(l, _)| l.clone())
            .collect()
    }
}

/// Hurwicz value `(1 − α)·worst + α·best` of one strategy.
pub fn hurwicz(m: &OutcomeMatrix, strategy: &str, alpha: f64) -> Result<f64, RiskError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RiskError::AlphaOutOfRange(alpha));
    }
    let i = m.index_of(strategy)?;
    Ok((1.0 - alpha) * m.worst(i) + alpha * m.best(i))
}

/// Per-strategy score and the (possibly tied) winners of a criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub scores: Vec<(String, f64)>,
    pub winners: Vec<String>,
}

impl CriterionResult {
    pub fn score(&self, strategy: &str) -> Option<f64> {
        self.scores.iter().find(|(s, _)| s == strategy).map(|x| x.1)
    }
}

/// Mean over scenarios. Winners are compared on exact sums.
pub fn laplace(m: &OutcomeMatrix) -> CriterionResult {
    let n = m.scenarios.len() as f64;
    let sums: Vec<f64> = m.values.iter().map(|r| r.iter().sum()).collect();
    let winners = m.winners(
        &sums.iter().map(|s| s * m.sign()).collect::<Vec<_>>(),
        true,
    );
    CriterionResult {
        scores: m.strategies.iter().cloned().zip(sums.iter().map(|s| s / n)).collect(),
        winners,
    }
}

/// Worst value per strategy; the best worst wins.
pub fn wald(m: &OutcomeMatrix) -> CriterionResult {
    let worst: Vec<f64> = (0..m.strategies.len()).map(|i| m.worst(i)).collect();
    CriterionResult {
        winners: m.winners(&worst.iter().map(|w| w * m.sign()).collect::<Vec<_>>(), true),
        scores: m.strategies.iter().cloned().zip(worst).collect(),
    }
}

/// Regret of `value` against the best value of its scenario.
fn regrets(m: &OutcomeMatrix) -> Vec<Vec<f64>> {
    let best: Vec<f64> = (0..m.scenarios.len())
        .map(|j| {
            (0..m.strategies.len())
                .map(|i| m.values[i][j])
                .max_by(|&a, &b| m.better(a, b))
                .unwrap()
        })
        .collect();
    m.values
        .iter()
        .map(|row| {
            row.iter()
                .zip(&best)
                .map(|(&v, &b)| (b - v) * m.sign())
                .collect()
        })
        .collect()
}

/// Maximum regret per strategy; the smallest maximum wins.
pub fn savage(m: &OutcomeMatrix) -> CriterionResult {
    let max_regret: Vec<f64> = regrets(m)
        .iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .collect();
    CriterionResult {
        winners: m.winners(&max_regret, false),
        scores: m.strategies.iter().cloned().zip(max_regret).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRange {
    pub min: f64,
    pub max: f64,
}

/// `cells[a][b]`: range over scenarios of the regret of using `b` when `a`
/// is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTable {
    pub orientation: Orientation,
    pub strategies: Vec<String>,
    pub cells: Vec<Vec<RegretRange>>,
}

impl RegretTable {
    pub fn cell(&self, reference: &str, used: &str) -> Option<RegretRange> {
        let a = self.strategies.iter().position(|s| s == reference)?;
        let b = self.strategies.iter().position(|s| s == used)?;
        Some(self.cells[a][b])
    }
}

pub fn regret_table(m: &OutcomeMatrix) -> RegretTable {
    let k = m.strategies.len();
    let mut cells = vec![vec![RegretRange { min: 0.0, max: 0.0 }; k]; k];
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let diffs = m.values[a]
                .iter()
                .zip(&m.values[b])
                .map(|(&va, &vb)| (va - vb) * m.sign());
            let (min, max) = diffs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
            cells[a][b] = RegretRange { min: min + 0.0, max: max + 0.0 };
        }
    }
    RegretTable {
        orientation: m.orientation,
        strategies: m.strategies.clone(),
        cells,
    }
}

/// Adds a per-strategy penalty to every cell of its row. Labels match
/// exactly, or case-insensitively when that is unambiguous.
pub fn apply_penalties(m: &OutcomeMatrix, penalties: &BTreeMap<String, f64>) -> Result<OutcomeMatrix, RiskError> {
    if m.orientation != Orientation::CostLowerBetter {
        return Err(RiskError::OrientationMismatch);
    }
    let mut out = m.clone();
    for (label, &amount) in penalties {
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(RiskError::InvalidPenalty {
                strategy: label.clone(),
                value: amount,
            });
        }
        let i = match m.strategies.iter().position(|s| s == label) {
            Some(i) => i,
            None => {
                let found: Vec<usize> = (0..m.strategies.len())
                    .filter(|&i| m.strategies[i].eq_ignore_ascii_case(label))
                    .collect();
                match found.as_slice() {
                    [i] => *i,
                    _ => return Err(RiskError::UnknownStrategy(label.clone())),
                }
            }
        };
        for v in &mut out.values[i] {
            *v += amount;
        }
    }
    Ok(out)
}

/// Parses `V2=1000,V3=2000`. Whitespace around items is ignored; an empty
/// string is an empty map.
pub fn parse_penalties(text: &str) -> Result<BTreeMap<String, f64>, RiskError> {
    let mut out = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (label, amount) = item
            .split_once('=')
            .ok_or_else(|| RiskError::PenaltySyntax(item.into()))?;
        let label = label.trim();
        let value: f64 = amount
            .trim()
            .parse()
            .map_err(|_| RiskError::PenaltySyntax(item.into()))?;
        if label.is_empty() {
            return Err(RiskError::PenaltySyntax(item.into()));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(RiskError::InvalidPenalty {
                strategy: label.into(),
                value,
            });
        }
        if out.insert(label.to_string(), value).is_some() {
            return Err(RiskError::DuplicateLabel(label.into()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyExtremes {
    pub strategy: String,
    pub worst: f64,
    pub best: f64,
}

/// A maximal α-interval with a constant set of recommended strategies.
/// Intervals are closed on the right: the winners at a breakpoint are those
/// of the interval ending there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaInterval {
    pub from: f64,
    pub to: f64,
    pub winners: Vec<String>,
    /// Tie set collapsed to its first label in lexical order.
    pub recommended: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub alpha: f64,
    /// Reduced fraction when the matrix is integral.
    pub exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDiagram {
    pub orientation: Orientation,
    pub extremes: Vec<StrategyExtremes>,
    pub breakpoints: Vec<Breakpoint>,
    pub intervals: Vec<AlphaInterval>,
    pub laplace: CriterionResult,
    pub wald: CriterionResult,
    pub savage: CriterionResult,
}

impl RiskDiagram {
    /// Winners at `alpha` (left interval at a breakpoint).
    pub fn recommended(&self, alpha: f64) -> &[String] {
        self.intervals
            .iter()
            .find(|iv| alpha <= iv.to)
            .or(self.intervals.last())
            .map_or(&[], |iv| iv.winners.as_slice())
    }
}

type Q = Ratio<i128>;

/// Scalar type the envelope scan runs on.
trait Scalar: Copy + PartialOrd {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn zero() -> Self;
    fn one() -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn eq_tol(self, o: Self) -> bool;
    fn exact(self) -> Option<String>;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn eq_tol(self, o: Self) -> bool {
        (self - o).abs() <= FLOAT_TOL * self.abs().max(o.abs()).max(1.0)
    }
    fn exact(self) -> Option<String> {
        None
    }
}

impl Scalar for Q {
    fn from_f64(v: f64) -> Self {
        Q::from_integer(v as i128)
    }
    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn zero() -> Self {
        Q::from_integer(0)
    }
    fn one() -> Self {
        Q::from_integer(1)
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn eq_tol(self, o: Self) -> bool {
        self == o
    }
    fn exact(self) -> Option<String> {
        Some(format!("{}/{}", self.numer(), self.denom()))
    }
}

/// Breakpoints and per-interval winners of the envelope of
/// `score_i(α) = w_i + α (b_i − w_i)`, larger score better.
fn envelope<S: Scalar>(labels: &[String], worst: &[S], best: &[S]) -> (Vec<Breakpoint>, Vec<AlphaInterval>) {
    let k = labels.len();
    let slope: Vec<S> = (0..k).map(|i| best[i].sub(worst[i])).collect();
    let mut cuts: Vec<S> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let ds = slope[i].sub(slope[j]);
            if ds.eq_tol(S::zero()) {
                continue;
            }
            let a = worst[j].sub(worst[i]).div(ds);
            if a > S::zero() && a < S::one() && !a.eq_tol(S::zero()) && !a.eq_tol(S::one()) {
                cuts.push(a);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    cuts.dedup_by(|a, b| a.eq_tol(*b));
    let mut edges = vec![S::zero()];
    edges.extend(cuts);
    edges.push(S::one());

    let two = S::one().add(S::one());
    let mut segments: Vec<(S, S, Vec<String>)> = Vec::new();
    for w in edges.windows(2) {
        let mid = w[0].add(w[1]).div(two);
        let scores: Vec<S> = (0..k).map(|i| worst[i].add(mid.mul(slope[i]))).collect();
        let top = scores
            .iter()
            .copied()
            .reduce(|a, b| if b > a { b } else { a })
            .unwrap();
        let winners: Vec<String> = (0..k)
            .filter(|&i| scores[i].eq_tol(top))
            .map(|i| labels[i].clone())
            .collect();
        match segments.last_mut() {
            Some(last) if last.2 == winners => last.1 = w[1],
            _ => segments.push((w[0], w[1], winners)),
        }
    }
    let breakpoints = segments
        .iter()
        .skip(1)
        .map(|(from, _, _)| Breakpoint {
            alpha: from.to_f64(),
            exact: from.exact(),
        })
        .collect();
    let intervals = segments
        .into_iter()
        .map(|(from, to, winners)| AlphaInterval {
            from: from.to_f64(),
            to: to.to_f64(),
            recommended: winners.iter().min().cloned().unwrap_or_default(),
            winners,
        })
        .collect();
    (breakpoints, intervals)
}

/// Hurwicz envelope over α ∈ [0, 1] with the three classic criteria
/// attached.
pub fn breakpoints(m: &OutcomeMatrix) -> Result<RiskDiagram, RiskError> {
    if m.strategies.len() < 2 {
        return Err(RiskError::TooFewStrategies(2));
    }
    let k = m.strategies.len();
    let worst: Vec<f64> = (0..k).map(|i| m.worst(i)).collect();
    let best: Vec<f64> = (0..k).map(|i| m.best(i)).collect();
    // Scores are oriented so that larger is better.
    let w: Vec<f64> = worst.iter().map(|v| v * m.sign()).collect();
    let b: Vec<f64> = best.iter().map(|v| v * m.sign()).collect();
    let (breakpoints, intervals) = if m.integral() {
        let q = |v: &Vec<f64>| v.iter().map(|&x| Q::from_f64(x)).collect::<Vec<_>>();
        envelope(&m.strategies, &q(&w), &q(&b))
    } else {
        envelope(&m.strategies, &w, &b)
    };
    Ok(RiskDiagram {
        orientation: m.orientation,
        extremes: (0..k)
            .map(|i| StrategyExtremes {
                strategy: m.strategies[i].clone(),
                worst: worst[i],
                best: best[i],
            })
            .collect(),
        breakpoints,
        intervals,
        laplace: laplace(m),
        wald: wald(m),
        savage: savage(m),
    })
}
