//! Finite reversible continuous-time Markov chains.
//!
//! A [`MarkovChain`] stores the off-diagonal transition rates `k(x,y)` as a
//! sparse adjacency list together with the reversible stationary density `π`.
//! State labels are arbitrary strings mapped to dense indices at build time.
//! Chains are immutable after construction.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for measure identities.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// A validated finite reversible Markov chain.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    /// Outgoing rates per state, sorted by target, zero rates removed.
    out: Vec<Vec<(usize, f64)>>,
    /// `k(x,x) = -Σ_{y≠x} k(x,y)`.
    diag: Vec<f64>,
    pi: Vec<f64>,
    truncated: bool,
}

/// Per-state rate statistics `M₁`, `M₂`, `N` and the `M₁` extremes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalStats {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub n_stat: Vec<f64>,
    pub m1_inf: f64,
    pub m1_sup: f64,
}

impl MarkovChain {
    /// Builds a chain from labelled rates. When `pi` is `None` the reversible
    /// stationary measure is reconstructed from rate ratios along a spanning
    /// tree; otherwise the supplied measure is normalized and checked.
    pub fn from_labelled_rates(
        labels: Vec<String>,
        rates: &[(String, String, f64)],
        pi: Option<Vec<f64>>,
        tol: f64,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::DuplicateState(l.clone()));
            }
        }
        let mut edges = Vec::with_capacity(rates.len());
        for (from, to, rate) in rates {
            let x = *index
                .get(from)
                .ok_or_else(|| Error::UnknownState(from.clone()))?;
            let y = *index.get(to).ok_or_else(|| Error::UnknownState(to.clone()))?;
            edges.push((x, y, *rate));
        }
        Self::build(labels, index, &edges, pi, tol)
    }

    /// Builds a chain on states `0..n` labelled by their index.
    pub fn from_indexed_rates(
        n: usize,
        rates: &[(usize, usize, f64)],
        pi: Option<Vec<f64>>,
        tol: f64,
    ) -> Result<Self> {
        let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        for &(x, y, _) in rates {
            if x >= n || y >= n {
                return Err(Error::UnknownState(x.max(y).to_string()));
            }
        }
        Self::build(labels, index, rates, pi, tol)
    }

    fn build(
        labels: Vec<String>,
        index: HashMap<String, usize>,
        edges: &[(usize, usize, f64)],
        pi: Option<Vec<f64>>,
        tol: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::TooFewStates(n));
        }
        let mut acc: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
        for &(x, y, rate) in edges {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::NegativeRate {
                    from: labels[x].clone(),
                    to: labels[y].clone(),
                    rate,
                });
            }
            if x == y || rate == 0.0 {
                continue;
            }
            *acc[x].entry(y).or_insert(0.0) += rate;
        }
        let out: Vec<Vec<(usize, f64)>> = acc
            .into_iter()
            .map(|m| {
                let mut row: Vec<(usize, f64)> = m.into_iter().collect();
                row.sort_by_key(|&(y, _)| y);
                row
            })
            .collect();
        if !strongly_connected(&out) {
            return Err(Error::NonIrreducible);
        }
        let diag = out
            .iter()
            .map(|row| -row.iter().map(|&(_, r)| r).sum::<f64>())
            .collect();

        let mut chain = MarkovChain {
            labels,
            index,
            out,
            diag,
            pi: Vec::new(),
            truncated: false,
        };
        chain.pi = match pi {
            Some(p) => normalize_measure(p, n)?,
            None => chain.reversible_measure()?,
        };
        chain.check_detailed_balance(tol)?;
        Ok(chain)
    }

    /// Reconstructs `π` from `π(y)/π(x) = k(x,y)/k(y,x)` along a BFS tree.
    fn reversible_measure(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut log_pi = vec![f64::NAN; n];
        log_pi[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(x) = queue.pop_front() {
            for &(y, kxy) in &self.out[x] {
                if !log_pi[y].is_nan() {
                    continue;
                }
                let kyx = self.rate(y, x);
                if kyx <= 0.0 {
                    return Err(Error::DetailedBalanceViolated {
                        x: self.labels[x].clone(),
                        y: self.labels[y].clone(),
                        residual: kxy,
                    });
                }
                log_pi[y] = log_pi[x] + kxy.ln() - kyx.ln();
                queue.push_back(y);
            }
        }
        Ok(normalize_log_measure(&log_pi))
    }

    /// Largest relative detailed-balance residual over all edges.
    pub fn detailed_balance_residual(&self) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for x in 0..self.len() {
            for &(y, kxy) in &self.out[x] {
                let a = self.pi[x] * kxy;
                let b = self.pi[y] * self.rate(y, x);
                let res = (a - b).abs() / a.max(b);
                if res > worst.0 {
                    worst = (res, x, y);
                }
            }
        }
        worst
    }

    fn check_detailed_balance(&self, tol: f64) -> Result<()> {
        let (res, x, y) = self.detailed_balance_residual();
        if res > tol {
            return Err(Error::DetailedBalanceViolated {
                x: self.labels[x].clone(),
                y: self.labels[y].clone(),
                residual: res,
            });
        }
        Ok(())
    }

    pub(crate) fn mark_truncated(mut self) -> Self {
        self.truncated = true;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    /// Stationary density with respect to counting measure.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// True when the chain is a truncation of an infinite chain; results on
    /// such chains are heuristic.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Off-diagonal neighbours `(y, k(x,y))` with positive rate.
    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.out[x]
    }

    /// `k(x,y)`, including the diagonal entry.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x];
        }
        match self.out[x].binary_search_by_key(&y, |&(z, _)| z) {
            Ok(i) => self.out[x][i].1,
            Err(_) => 0.0,
        }
    }

    /// `Σ_y k(x,y)` including the stored diagonal.
    pub fn row_sum(&self, x: usize) -> f64 {
        self.out[x].iter().map(|&(_, r)| r).sum::<f64>() + self.diag[x]
    }

    pub fn max_rate(&self) -> f64 {
        self.out
            .iter()
            .flat_map(|row| row.iter().map(|&(_, r)| r))
            .fold(0.0, f64::max)
    }

    /// Dense generator matrix with `L[x][y] = k(x,y)`.
    pub fn generator_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            m[(x, x)] = self.diag[x];
            for &(y, r) in &self.out[x] {
                m[(x, y)] = r;
            }
        }
        m
    }

    /// All off-diagonal rates as `(x, y, k(x,y))`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().map(move |&(y, r)| (x, y, r)))
            .collect()
    }

    /// Combinatorial graph distance from `x` in the underlying graph.
    pub fn graph_distances(&self, x: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[x] = 0;
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.out[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// States within graph distance 2 of `x`, starting with `x` itself.
    pub fn two_ball(&self, x: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut ball = vec![x];
        seen[x] = true;
        for &(y, _) in &self.out[x] {
            if !seen[y] {
                seen[y] = true;
                ball.push(y);
            }
        }
        let first = ball.len();
        for i in 1..first {
            let y = ball[i];
            for &(z, _) in &self.out[y] {
                if !seen[z] {
                    seen[z] = true;
                    ball.push(z);
                }
            }
        }
        ball
    }

    pub fn local_stats(&self) -> LocalStats {
        local_stats(self)
    }

    /// True when every nonzero rate equals one and all degrees agree.
    pub fn regular_unweighted_degree(&self) -> Option<usize> {
        let d = self.out[0].len();
        let ok = self
            .out
            .iter()
            .all(|row| row.len() == d && row.iter().all(|&(_, r)| r == 1.0));
        ok.then_some(d)
    }
}

fn strongly_connected(out: &[Vec<(usize, f64)>]) -> bool {
    let n = out.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (x, row) in out.iter().enumerate() {
        for &(y, _) in row {
            rev[y].push(x);
        }
    }
    let reach = |adj: &dyn Fn(usize) -> Vec<usize>| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in adj(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    };
    reach(&|u| out[u].iter().map(|&(v, _)| v).collect()) && reach(&|u| rev[u].clone())
}

fn normalize_measure(p: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: p.len(),
        });
    }
    if p.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::InvalidMeasure("entries must be finite and positive".into()));
    }
    let total: f64 = p.iter().sum();
    Ok(p.into_iter().map(|v| v / total).collect())
}

pub(crate) fn normalize_log_measure(log_pi: &[f64]) -> Vec<f64> {
    let shift = log_pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_pi.iter().map(|&l| (l - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Stationary measure of an irreducible rate table on states `0..n`, from the
/// dense linear system `πL = 0`, `Σπ = 1`. Works for non-reversible rates too.
pub fn stationary_measure(n: usize, rates: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::TooFewStates(n));
    }
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut lt = DMatrix::<f64>::zeros(n, n);
    for &(x, y, r) in rates {
        if x >= n || y >= n {
            return Err(Error::UnknownState(x.max(y).to_string()));
        }
        if r < 0.0 || !r.is_finite() {
            return Err(Error::NegativeRate {
                from: x.to_string(),
                to: y.to_string(),
                rate: r,
            });
        }
        if x == y || r == 0.0 {
            continue;
        }
        out[x].push((y, r));
        // transpose: column x of L becomes row x of L^T
        lt[(y, x)] += r;
        lt[(x, x)] -= r;
    }
    if !strongly_connected(&out) {
        return Err(Error::NonIrreducible);
    }
    for j in 0..n {
        lt[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = lt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidMeasure("singular system".into()))?;
    Ok(sol.iter().map(|&v| v.max(0.0)).collect())
}

pub fn local_stats(chain: &MarkovChain) -> LocalStats {
    let n = chain.len();
    let m1: Vec<f64> = (0..n)
        .map(|x| chain.neighbors(x).iter().map(|&(_, r)| r).sum())
        .collect();
    let m2 = (0..n)
        .map(|x| chain.neighbors(x).iter().map(|&(y, r)| r * m1[y]).sum())
        .collect();
    let n_stat = (0..n)
        .map(|x| {
            chain
                .neighbors(x)
                .iter()
                .map(|&(y, r)| r * chain.rate(y, x))
                .sum()
        })
        .collect();
    let m1_inf = m1.iter().cloned().fold(f64::INFINITY, f64::min);
    let m1_sup = m1.iter().cloned().fold(0.0, f64::max);
    LocalStats {
        m1,
        m2,
        n_stat,
        m1_inf,
        m1_sup,
    }
}

/// Truncates a birth-death process on `{0, …, cutoff}`; the birth rate at the
/// cutoff is dropped. `π` follows `a(x)π(x) = b(x+1)π(x+1)`, normalized.
pub fn truncate_birth_death(
    birth: impl Fn(usize) -> f64,
    death: impl Fn(usize) -> f64,
    cutoff: usize,
) -> Result<MarkovChain> {
    if cutoff < 1 {
        return Err(Error::TooFewStates(cutoff + 1));
    }
    let mut rates = Vec::with_capacity(2 * cutoff);
    let mut log_pi = vec![0.0; cutoff + 1];
    for x in 0..cutoff {
        let a = birth(x);
        let b = death(x + 1);
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::ZeroRateInsideRange(x));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::ZeroRateInsideRange(x + 1));
        }
        rates.push((x, x + 1, a));
        rates.push((x + 1, x, b));
        log_pi[x + 1] = log_pi[x] + a.ln() - b.ln();
    }
    let pi = normalize_log_measure(&log_pi);
    Ok(MarkovChain::from_indexed_rates(cutoff + 1, &rates, Some(pi), DEFAULT_TOLERANCE)?.mark_truncated())
}

/// Label that accepts JSON strings or numbers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum StateLabel {
    Text(String),
    Number(serde_json::Number),
}

impl StateLabel {
    pub fn as_label(&self) -> String {
        match self {
            StateLabel::Text(s) => s.clone(),
            StateLabel::Number(n) => n.to_string(),
        }
    }
}

/// Optional stationary density in a chain-spec file: aligned with `states` or
/// keyed by label.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MeasureSpec {
    Aligned(Vec<f64>),
    Keyed(std::collections::BTreeMap<String, f64>),
}

/// Chain-spec file contents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ChainSpec {
    Explicit {
        states: Vec<StateLabel>,
        rates: Vec<(StateLabel, StateLabel, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pi: Option<MeasureSpec>,
    },
    Family {
        family: String,
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
    },
}

impl ChainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }
}

/// Builds and validates a chain from a spec.
pub fn build_chain(spec: &ChainSpec, tol: f64) -> Result<MarkovChain> {
    match spec {
        ChainSpec::Explicit { states, rates, pi } => {
            let labels: Vec<String> = states.iter().map(StateLabel::as_label).collect();
            let rates: Vec<(String, String, f64)> = rates
                .iter()
                .map(|(x, y, r)| (x.as_label(), y.as_label(), *r))
                .collect();
            let pi = match pi {
                None => None,
                Some(MeasureSpec::Aligned(v)) => Some(v.clone()),
                Some(MeasureSpec::Keyed(map)) => Some(
                    labels
                        .iter()
                        .map(|l| {
                            map.get(l)
                                .copied()
                                .ok_or_else(|| Error::UnknownState(l.clone()))
                        })
                        .collect::<Result<Vec<f64>>>()?,
                ),
            };
            MarkovChain::from_labelled_rates(labels, &rates, pi, tol)
        }
        ChainSpec::Family { family, params } => {
            let fam = crate::families::Family::from_params(family, params)?;
            Ok(crate::families::make_example(&fam)?.chain)
        }
    }
}
