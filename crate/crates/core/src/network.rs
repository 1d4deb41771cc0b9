//! Directed interaction graphs, switching schedules and delayed message
//! channels.
//!
//! Edge convention: `w[i][j] > 0` means robot `i` receives `j`'s signal
//! (`j ∈ N_i`). For reachability the edge is traversed `i → j`, so a
//! spanning-tree root is a vertex every other vertex can reach; information
//! flows from the root outwards.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("graph vertex count mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("edge ({i}, {j}) out of range for {n} vertices")]
    EdgeOutOfRange { i: usize, j: usize, n: usize },
    #[error("self loop at vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) has invalid weight {w}")]
    BadWeight { i: usize, j: usize, w: f64 },
    #[error("empty graph list")]
    NoGraphs,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid delay model: {0}")]
    InvalidDelayModel(String),
    #[error("delay channel is empty")]
    EmptyChannel,
    #[error("non-increasing timestamp {t} after {last}")]
    NonMonotoneTimestamp { t: f64, last: f64 },
}

/// Weighted digraph over `n` robots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct DiGraph {
    weights: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRepr {
    n: usize,
    /// `[i, j, w]`: `j ∈ N_i` with weight `w`.
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphRepr> for DiGraph {
    type Error = NetworkError;

    fn try_from(r: GraphRepr) -> Result<Self, Self::Error> {
        DiGraph::from_edges(r.n, &r.edges)
    }
}

impl From<DiGraph> for GraphRepr {
    fn from(g: DiGraph) -> Self {
        GraphRepr { n: g.n(), edges: g.edges().collect() }
    }
}

impl DiGraph {
    pub fn empty(n: usize) -> Self {
        Self { weights: DMatrix::zeros(n, n) }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, NetworkError> {
        let mut g = Self::empty(n);
        for &(i, j, w) in edges {
            g.set_weight(i, j, w)?;
        }
        Ok(g)
    }

    /// Unit-weight edges.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self, NetworkError> {
        let edges: Vec<_> = pairs.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, NetworkError> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(NetworkError::SizeMismatch(n, weights.ncols()));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                // NaN also compares unequal and is rejected by set_weight.
                if w != 0.0 {
                    g.set_weight(i, j, w)?;
                }
            }
        }
        Ok(g)
    }

    fn set_weight(&mut self, i: usize, j: usize, w: f64) -> Result<(), NetworkError> {
        let n = self.n();
        if i >= n || j >= n {
            return Err(NetworkError::EdgeOutOfRange { i, j, n });
        }
        if i == j {
            return Err(NetworkError::SelfLoop(i));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(NetworkError::BadWeight { i, j, w });
        }
        self.weights[(i, j)] = w;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `(j, w_ij)` for every `j ∈ N_i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n()).filter_map(move |j| {
            let w = self.weights[(i, j)];
            (w > 0.0).then_some((j, w))
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| self.neighbors(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.weights.row(i).sum();
        }
        l
    }

    /// Vertices reached from `root` along information edges `j → i` (w_ij > 0).
    fn reaches(&self, root: usize) -> Vec<bool> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(v) = stack.pop() {
            for (u, flag) in seen.iter_mut().enumerate() {
                if !*flag && self.weights[(u, v)] > 0.0 {
                    *flag = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Smallest-index root of a directed spanning tree, if one exists.
    pub fn spanning_tree_root(&self) -> Option<usize> {
        (0..self.n()).find(|&k| self.reaches(k).into_iter().all(|r| r))
    }

    pub fn has_spanning_tree(&self) -> bool {
        self.spanning_tree_root().is_some()
    }

    /// Every vertex that qualifies as a spanning-tree root.
    pub fn spanning_tree_roots(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&k| self.reaches(k).into_iter().all(|r| r))
            .collect()
    }
}

/// Edge-set union; weights of shared edges are summed.
pub fn union<'a, I>(graphs: I) -> Result<DiGraph, NetworkError>
where
    I: IntoIterator<Item = &'a DiGraph>,
{
    let mut iter = graphs.into_iter();
    let first = iter.next().ok_or(NetworkError::NoGraphs)?;
    let mut acc = first.weights.clone();
    for g in iter {
        if g.n() != first.n() {
            return Err(NetworkError::SizeMismatch(first.n(), g.n()));
        }
        acc += &g.weights;
    }
    Ok(DiGraph { weights: acc })
}

/// Six-robot fixture triple: no single graph has a spanning tree, their
/// union is strongly connected. Pairs are `(i, j)` with `j ∈ N_i`
/// (0-based).
pub fn fixture_triple() -> [DiGraph; 3] {
    let mk = |pairs: &[(usize, usize)]| DiGraph::from_pairs(6, pairs).expect("fixture is valid");
    // 1-based: G_a = {2→1, 3→2}, G_b = {4→3, 5→4}, G_c = {6→5, 1→6, 3→1}.
    [
        mk(&[(1, 0), (2, 1)]),
        mk(&[(3, 2), (4, 3)]),
        mk(&[(5, 4), (0, 5), (2, 0)]),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingMode {
    /// Each slot draws a graph independently and uniformly.
    #[default]
    Uniform,
    /// Each block of `graphs.len()` slots is a random permutation.
    Shuffled,
}

/// Piecewise-constant interaction topology on `[0, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    graphs: Vec<DiGraph>,
    switch_times: Vec<f64>,
    active: Vec<usize>,
    horizon: f64,
}

impl GraphSchedule {
    pub fn new(
        graphs: Vec<DiGraph>,
        switch_times: Vec<f64>,
        active: Vec<usize>,
        horizon: f64,
    ) -> Result<Self, NetworkError> {
        let bad = |m: &str| Err(NetworkError::InvalidSchedule(m.to_string()));
        let Some(first) = graphs.first() else {
            return Err(NetworkError::NoGraphs);
        };
        if let Some(g) = graphs.iter().find(|g| g.n() != first.n()) {
            return Err(NetworkError::SizeMismatch(first.n(), g.n()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if switch_times.len() != active.len() {
            return bad("switch_times and active differ in length");
        }
        if switch_times.first() != Some(&0.0) {
            return bad("first switch time must be 0");
        }
        if switch_times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("switch times must be strictly increasing");
        }
        if switch_times.last().is_some_and(|&t| t >= horizon) {
            return bad("switch times must precede the horizon");
        }
        if active.iter().any(|&a| a >= graphs.len()) {
            return bad("active index out of range");
        }
        Ok(Self { graphs, switch_times, active, horizon })
    }

    pub fn fixed(graph: DiGraph, horizon: f64) -> Result<Self, NetworkError> {
        Self::new(vec![graph], vec![0.0], vec![0], horizon)
    }

    /// Graph redrawn every `period` seconds from `graphs`.
    pub fn random_switching(
        graphs: Vec<DiGraph>,
        period: f64,
        horizon: f64,
        mode: SwitchingMode,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        if !(period > 0.0) {
            return Err(NetworkError::InvalidSchedule("period must be positive".into()));
        }
        if graphs.is_empty() {
            return Err(NetworkError::NoGraphs);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = (horizon / period - 1e-9).ceil().max(1.0) as usize;
        let m = graphs.len();
        let active: Vec<usize> = match mode {
            SwitchingMode::Uniform => (0..slots).map(|_| rng.random_range(0..m)).collect(),
            SwitchingMode::Shuffled => {
                let mut out = Vec::with_capacity(slots + m);
                while out.len() < slots {
                    let mut block: Vec<usize> = (0..m).collect();
                    block.shuffle(&mut rng);
                    out.extend(block);
                }
                out.truncate(slots);
                out
            }
        };
        let switch_times = (0..slots).map(|k| k as f64 * period).collect();
        Self::new(graphs, switch_times, active, horizon)
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn graphs(&self) -> &[DiGraph] {
        &self.graphs
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    fn interval_at(&self, t: f64) -> usize {
        self.switch_times
            .partition_point(|&s| s <= t + 1e-9)
            .saturating_sub(1)
    }

    pub fn active_at(&self, t: f64) -> &DiGraph {
        &self.graphs[self.active[self.interval_at(t)]]
    }

    fn interval_end(&self, k: usize) -> f64 {
        self.switch_times.get(k + 1).copied().unwrap_or(self.horizon)
    }

    /// Shortest interval between switches, the last (horizon-truncated)
    /// interval excluded when there are several.
    pub fn dwell_min(&self) -> f64 {
        let k = self.switch_times.len();
        let upto = if k > 1 { k - 1 } else { k };
        (0..upto)
            .map(|i| self.interval_end(i) - self.switch_times[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn dwell_max(&self) -> f64 {
        (0..self.switch_times.len())
            .map(|i| self.interval_end(i) - self.switch_times[i])
            .fold(0.0, f64::max)
    }

    /// Union of the graphs active at any instant of `[start, end)`.
    pub fn union_over(&self, start: f64, end: f64) -> DiGraph {
        let first = self.interval_at(start);
        let mut k = first;
        let mut acc = self.graphs[self.active[first]].weights.clone();
        while k + 1 < self.switch_times.len() && self.switch_times[k + 1] < end - 1e-9 {
            k += 1;
            acc += &self.graphs[self.active[k]].weights;
        }
        DiGraph { weights: acc }
    }

    /// Per-window union verdicts over consecutive windows of length `window`.
    /// A trailing window cut short by the horizon is skipped unless it is the
    /// only one.
    pub fn window_verdicts(&self, window: f64) -> Vec<WindowVerdict> {
        assert!(window > 0.0, "window must be positive");
        let count = (self.horizon / window + 1e-9).floor().max(1.0) as usize;
        (0..count)
            .map(|k| {
                let start = k as f64 * window;
                let end = ((k + 1) as f64 * window).min(self.horizon);
                WindowVerdict { start, end, root: self.union_over(start, end).spanning_tree_root() }
            })
            .collect()
    }

    /// Greedy partition of `[0, horizon)` into minimal jointly-connected
    /// intervals; returns the longest such interval. An unfinished tail is
    /// tolerated while it is no longer than that; otherwise `None`.
    pub fn longest_connecting_interval(&self) -> Option<f64> {
        let mut longest: f64 = 0.0;
        let mut start_k = 0;
        let count = self.switch_times.len();
        while start_k < count {
            let mut acc = self.graphs[self.active[start_k]].weights.clone();
            let mut k = start_k;
            loop {
                if (DiGraph { weights: acc.clone() }).has_spanning_tree() {
                    break;
                }
                k += 1;
                if k == count {
                    let tail = self.horizon - self.switch_times[start_k];
                    return (longest > 0.0 && tail <= longest + 1e-9).then_some(longest);
                }
                acc += &self.graphs[self.active[k]].weights;
            }
            longest = longest.max(self.interval_end(k) - self.switch_times[start_k]);
            start_k = k + 1;
        }
        Some(longest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowVerdict {
    pub start: f64,
    pub end: f64,
    pub root: Option<usize>,
}

impl WindowVerdict {
    pub fn passed(&self) -> bool {
        self.root.is_some()
    }
}

/// True iff the union over every consecutive window contains a directed
/// spanning tree.
pub fn schedule_condition_check(sched: &GraphSchedule, window: f64) -> bool {
    sched.window_verdicts(window).iter().all(WindowVerdict::passed)
}

/// Piecewise-constant random delay `T(t) = base + U(0, jitter_max)`, redrawn
/// every `resample_period` seconds independently per edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub base: f64,
    #[serde(default)]
    pub jitter_max: f64,
    pub resample_period: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DelayModel {
    pub fn constant(delay: f64) -> Self {
        Self { base: delay, jitter_max: 0.0, resample_period: 1.0, seed: 0 }
    }

    /// `0.3 + U[0, 0.9]` redrawn every 30 ms.
    pub fn jittered(seed: u64) -> Self {
        Self { base: 0.3, jitter_max: 0.9, resample_period: 0.03, seed }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: &str| Err(NetworkError::InvalidDelayModel(m.to_string()));
        if !(self.base >= 0.0 && self.base.is_finite()) {
            return bad("base must be nonnegative");
        }
        if !(self.jitter_max >= 0.0 && self.jitter_max.is_finite()) {
            return bad("jitter_max must be nonnegative");
        }
        if !(self.resample_period > 0.0 && self.resample_period.is_finite()) {
            return bad("resample_period must be positive");
        }
        Ok(())
    }

    pub fn max_delay(&self) -> f64 {
        self.base + self.jitter_max
    }

    /// Delay on edge `(receiver, sender)` at time `t`.
    pub fn sample_delay(&self, edge: (usize, usize), t: f64) -> f64 {
        if self.jitter_max == 0.0 {
            return self.base;
        }
        let slot = ((t.max(0.0) + 1e-9) / self.resample_period).floor() as u128;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((edge.0 as u64) << 32) | edge.1 as u64);
        rng.set_word_pos(2 * slot);
        // 53 random mantissa bits, in [0, 1).
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.base + self.jitter_max * u
    }
}

/// Timestamped ξ samples of one sender, read back with zero-order hold.
#[derive(Debug, Clone)]
pub struct DelayChannel {
    samples: VecDeque<(f64, Vector2<f64>)>,
    horizon: f64,
}

impl DelayChannel {
    /// `horizon` is the longest lookback that must stay readable.
    pub fn new(horizon: f64) -> Self {
        Self { samples: VecDeque::new(), horizon }
    }

    pub fn for_model(model: &DelayModel) -> Self {
        Self::new(model.max_delay() + model.resample_period + 1.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, t: f64, xi: Vector2<f64>) -> Result<(), NetworkError> {
        if let Some(&(last, _)) = self.samples.back() {
            if !(t > last) {
                return Err(NetworkError::NonMonotoneTimestamp { t, last });
            }
        }
        self.samples.push_back((t, xi));
        let keep_after = t - self.horizon;
        while self.samples.len() > 1 && self.samples[1].0 <= keep_after {
            self.samples.pop_front();
        }
        Ok(())
    }

    /// Latest sample with timestamp `≤ t − delay`, or the oldest sample when
    /// the lookback precedes the buffer.
    pub fn delayed_sample(&self, t: f64, delay: f64) -> Result<(f64, Vector2<f64>), NetworkError> {
        if self.samples.is_empty() {
            return Err(NetworkError::EmptyChannel);
        }
        let target = t - delay;
        let idx = self.samples.partition_point(|&(ts, _)| ts <= target + 1e-12);
        Ok(self.samples[idx.saturating_sub(1)])
    }

    pub fn delayed_read(&self, t: f64, delay: f64) -> Result<Vector2<f64>, NetworkError> {
        self.delayed_sample(t, delay).map(|(_, v)| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_rules() {
        assert_eq!(DiGraph::empty(3).laplacian(), DMatrix::zeros(3, 3));
        let g = DiGraph::from_pairs(2, &[(0, 1)]).unwrap();
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn graph_validation() {
        assert_eq!(DiGraph::from_pairs(2, &[(0, 0)]), Err(NetworkError::SelfLoop(0)));
        assert!(DiGraph::from_edges(2, &[(0, 1, -1.0)]).is_err());
        assert!(DiGraph::from_edges(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn union_cases() {
        let a = DiGraph::from_pairs(3, &[(0, 1)]).unwrap();
        let b = DiGraph::from_pairs(3, &[(1, 2)]).unwrap();
        let aa = union([&a, &a]).unwrap();
        assert_eq!(aa.edges().map(|(i, j, _)| (i, j)).collect::<Vec<_>>(), vec![(0, 1)]);
        let ab = union([&a, &b]).unwrap();
        assert_eq!(ab.edges().map(|(i, j, _)| (i, j)).collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(union([&a, &DiGraph::empty(2)]), Err(NetworkError::SizeMismatch(3, 2)));
        assert_eq!(union(std::iter::empty::<&DiGraph>()), Err(NetworkError::NoGraphs));
    }

    #[test]
    fn spanning_tree_star_and_isolated() {
        // Every robot listens to robot 0.
        let star = DiGraph::from_pairs(4, &[(1, 0), (2, 0), (3, 0)]).unwrap();
        assert_eq!(star.spanning_tree_root(), Some(0));
        let isolated = DiGraph::from_pairs(3, &[(1, 0)]).unwrap();
        assert!(!isolated.has_spanning_tree());
    }

    #[test]
    fn fixture_only_union_connected() {
        let fx = fixture_triple();
        for g in &fx {
            assert!(!g.has_spanning_tree());
        }
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            assert!(!union([&fx[a], &fx[b]]).unwrap().has_spanning_tree());
        }
        let u = union(&fx).unwrap();
        assert_eq!(u.spanning_tree_roots(), (0..6).collect::<Vec<_>>());
        let mut edges: Vec<_> = u.edges().map(|(i, j, _)| (i + 1, j + 1)).collect();
        edges.sort();
        assert_eq!(edges, vec![(1, 6), (2, 1), (3, 1), (3, 2), (4, 3), (5, 4), (6, 5)]);
    }

    #[test]
    fn schedule_checks() {
        let fx = fixture_triple();
        let u = union(&fx).unwrap();
        let fixed = GraphSchedule::fixed(u, 10.0).unwrap();
        assert!(schedule_condition_check(&fixed, 0.45));
        assert!(schedule_condition_check(&fixed, 3.0));

        let never = GraphSchedule::random_switching(
            vec![fx[0].clone(), fx[1].clone()], 0.15, 10.0, SwitchingMode::Uniform, 3,
        )
        .unwrap();
        assert!(!schedule_condition_check(&never, 0.45));
        assert!(!schedule_condition_check(&never, 10.0));
        assert_eq!(never.longest_connecting_interval(), None);

        let shuffled =
            GraphSchedule::random_switching(fx.to_vec(), 0.15, 60.0, SwitchingMode::Shuffled, 9).unwrap();
        assert!(schedule_condition_check(&shuffled, 0.45));
        assert!(shuffled.longest_connecting_interval().unwrap() <= 0.9 + 1e-9);
    }

    #[test]
    fn window_shorter_than_dwell_fails_while_longer_passes() {
        let fx = fixture_triple();
        let sched = GraphSchedule::new(fx.to_vec(), vec![0.0, 0.15, 0.3], vec![0, 1, 2], 0.45).unwrap();
        assert!(schedule_condition_check(&sched, 0.45));
        assert!(!schedule_condition_check(&sched, 0.15));
        assert!((sched.dwell_min() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        let g = DiGraph::empty(2);
        assert!(GraphSchedule::new(vec![g.clone()], vec![0.1], vec![0], 1.0).is_err());
        assert!(GraphSchedule::new(vec![g.clone()], vec![0.0, 0.0], vec![0, 0], 1.0).is_err());
        assert!(GraphSchedule::new(vec![g.clone()], vec![0.0], vec![1], 1.0).is_err());
        assert!(GraphSchedule::new(vec![g], vec![0.0], vec![0], -1.0).is_err());
    }

    #[test]
    fn active_graph_lookup() {
        let fx = fixture_triple();
        let sched = GraphSchedule::new(fx.to_vec(), vec![0.0, 0.15, 0.3], vec![2, 0, 1], 1.0).unwrap();
        assert_eq!(sched.active_at(0.0), &fx[2]);
        assert_eq!(sched.active_at(0.149), &fx[2]);
        assert_eq!(sched.active_at(0.15), &fx[0]);
        assert_eq!(sched.active_at(0.9), &fx[1]);
    }

    #[test]
    fn delay_model_basics() {
        let m = DelayModel { base: 0.3, jitter_max: 0.0, resample_period: 0.03, seed: 5 };
        assert_eq!(m.sample_delay((0, 1), 17.3), 0.3);
        let m = DelayModel::jittered(42);
        let a = m.sample_delay((2, 4), 1.234);
        assert_eq!(a, m.sample_delay((2, 4), 1.234));
        // Same 30 ms slot.
        assert_eq!(a, m.sample_delay((2, 4), 1.2301));
        assert_ne!(a, m.sample_delay((4, 2), 1.234));
        assert!((0.3..=1.2).contains(&a));
        assert!(DelayModel { base: -1.0, ..m }.validate().is_err());
        assert!(DelayModel { resample_period: 0.0, ..m }.validate().is_err());
    }

    #[test]
    fn delayed_read_zoh() {
        let mut ch = DelayChannel::new(10.0);
        assert_eq!(ch.delayed_read(0.0, 0.0), Err(NetworkError::EmptyChannel));
        let v = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 1.0), Vector2::new(2.0, 2.0)];
        for (k, x) in v.iter().enumerate() {
            ch.push(k as f64 * 0.005, *x).unwrap();
        }
        assert_eq!(ch.delayed_read(0.010, 0.0).unwrap(), v[2]);
        assert_eq!(ch.delayed_read(0.005, 0.0).unwrap(), v[1]);
        assert_eq!(ch.delayed_read(0.012, 0.004).unwrap(), v[1]);
        assert_eq!(ch.delayed_read(0.010, 5.0).unwrap(), v[0]);
        assert!(ch.push(0.010, v[0]).is_err());
    }

    #[test]
    fn channel_eviction_keeps_lookback() {
        let mut ch = DelayChannel::new(1.0);
        for k in 0..1000 {
            ch.push(k as f64 * 0.005, Vector2::new(k as f64, 0.0)).unwrap();
        }
        assert!(ch.len() < 220);
        let now = 999.0 * 0.005;
        let (ts, _) = ch.delayed_sample(now, 1.0).unwrap();
        assert!((ts - (now - 1.0)).abs() < 0.0051);
    }

    #[test]
    fn graph_serde_round_trip() {
        let g = fixture_triple()[2].clone();
        let s = serde_json::to_string(&g).unwrap();
        let back: DiGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<DiGraph>(r#"{"n":2,"edges":[[0,0,1.0]]}"#).is_err());
    }
}
