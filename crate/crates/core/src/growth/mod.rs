//! Tree growth under the weighted attachment law.
//!
//! Node `n` attaches to an existing node `j` with probability
//! `w(deg j) / Σ_i w(deg i)`. Because the weight depends on the degree only,
//! the sampler keeps one dense bucket of node ids per degree and a Fenwick
//! index over degrees holding `count(d)·w(d)`. A step draws `u ∈ [0, 1)`,
//! locates the degree class of `u·total_weight` in the index, then picks a
//! node uniformly inside that bucket. Cost per step is `O(log maxdegree)`.
//!
//! In continuous mode every node carries an exponential clock of rate
//! `w(deg)`. The superposition rings after `Exp(total_weight)` time and
//! selects the parent with the same law, so the embedded jump chain is the
//! discrete model. Clock draws come from a separate RNG stream, which makes
//! discrete and continuous runs with one seed produce identical trees.
//!
//! Randomness: ChaCha8 seeded with `seed`, stream [`ATTACH_STREAM`] for
//! attachments and stream [`CLOCK_STREAM`] for waiting times.
//!
//! The root is an ordinary node of weight `w(0)` from time 0 and counts
//! towards `N_0`.

mod fenwick;

use num_traits::{Float, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::weights::WeightSpec;
use crate::{DegreeHistogram, Error, Result, Scalar};
use fenwick::Fenwick;

pub const ATTACH_STREAM: u64 = 0;
pub const CLOCK_STREAM: u64 = 1;

/// Steps between exact recomputations of the total weight.
pub const REFRESH_INTERVAL: u64 = 1 << 20;

const NO_PARENT: u32 = u32::MAX;

/// Weight of a node as a function of its out-degree.
pub trait DegreeWeight: Send + Sync {
    type Scalar: Scalar;

    fn weight(&self, degree: usize) -> Self::Scalar;
}

impl<T: Scalar> DegreeWeight for WeightSpec<T> {
    type Scalar = T;

    #[inline]
    fn weight(&self, degree: usize) -> T {
        self.evaluate(degree)
    }
}

impl<W: DegreeWeight> DegreeWeight for &W {
    type Scalar = W::Scalar;

    fn weight(&self, degree: usize) -> W::Scalar {
        (*self).weight(degree)
    }
}

/// Seeded generator for one of the two per-run streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthDiagnostics {
    /// Searches whose target overshot the index and were clamped to the top degree.
    pub clamped_searches: u64,
    /// Searches that landed on an empty bucket through rounding.
    pub empty_bucket_fallbacks: u64,
    pub refreshes: u64,
    /// Largest relative gap between incremental and recomputed total weight.
    pub max_relative_drift: f64,
    /// Fenwick cells touched so far.
    pub index_probes: u64,
}

pub struct GrowthState<W: DegreeWeight> {
    weights: W,
    weight_cache: Vec<W::Scalar>,
    parent: Vec<u32>,
    degree: Vec<u32>,
    /// Position of each node inside its degree bucket.
    slot: Vec<u32>,
    buckets: Vec<Vec<u32>>,
    index: Fenwick<W::Scalar>,
    total_weight: W::Scalar,
    birth_time: Option<Vec<W::Scalar>>,
    clock: W::Scalar,
    max_degree: usize,
    steps_since_refresh: u64,
    diagnostics: GrowthDiagnostics,
}

impl<W: DegreeWeight> GrowthState<W> {
    /// A single root node.
    pub fn new(weights: W, record_birth_times: bool) -> Self {
        Self::with_capacity(weights, 1, record_birth_times).expect("one node always fits")
    }

    /// Root only, with storage reserved for `n_nodes`.
    pub fn with_capacity(weights: W, n_nodes: usize, record_birth_times: bool) -> Result<Self> {
        if n_nodes > NO_PARENT as usize {
            return Err(Error::Capacity { requested: n_nodes });
        }
        let cap_err = |_| Error::Capacity { requested: n_nodes };
        let mut parent = Vec::new();
        parent.try_reserve_exact(n_nodes).map_err(cap_err)?;
        let mut degree = Vec::new();
        degree.try_reserve_exact(n_nodes).map_err(cap_err)?;
        let mut slot = Vec::new();
        slot.try_reserve_exact(n_nodes).map_err(cap_err)?;
        let mut leaves = Vec::new();
        leaves.try_reserve(n_nodes).map_err(cap_err)?;
        let birth_time = if record_birth_times {
            let mut v = Vec::new();
            v.try_reserve_exact(n_nodes).map_err(cap_err)?;
            v.push(W::Scalar::zero());
            Some(v)
        } else {
            None
        };

        let w0 = weights.weight(0);
        parent.push(NO_PARENT);
        degree.push(0);
        slot.push(0);
        leaves.push(0);
        let index = Fenwick::from_values(&[w0], 16);
        Ok(Self {
            weights,
            weight_cache: vec![w0],
            parent,
            degree,
            slot,
            buckets: vec![leaves],
            index,
            total_weight: w0,
            birth_time,
            clock: W::Scalar::zero(),
            max_degree: 0,
            steps_since_refresh: 0,
            diagnostics: GrowthDiagnostics::default(),
        })
    }

    pub fn weights(&self) -> &W {
        &self.weights
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    /// Parent of node `i`; `None` for the root.
    pub fn parent_of(&self, i: usize) -> Option<usize> {
        match self.parent[i] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.degree[i] as usize
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degree
    }

    /// Nodes currently of out-degree `d`.
    pub fn bucket(&self, d: usize) -> &[u32] {
        self.buckets.get(d).map_or(&[], Vec::as_slice)
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn total_weight(&self) -> W::Scalar {
        self.total_weight
    }

    pub fn clock(&self) -> W::Scalar {
        self.clock
    }

    /// `T_n` per node (root at 0), when recorded.
    pub fn birth_times(&self) -> Option<&[W::Scalar]> {
        self.birth_time.as_deref()
    }

    pub fn diagnostics(&self) -> GrowthDiagnostics {
        GrowthDiagnostics {
            index_probes: self.index.probes,
            ..self.diagnostics.clone()
        }
    }

    /// Probability that the next node attaches to `j`.
    pub fn attach_probability(&self, j: usize) -> W::Scalar {
        self.weight_cache[self.degree_of(j)] / self.total_weight
    }

    /// `Σ_d count(d)·w(d)` recomputed from the buckets.
    pub fn recompute_total_weight(&self) -> W::Scalar {
        let mut sum = crate::scalar::CompensatedSum::new();
        for (d, b) in self.buckets.iter().enumerate() {
            sum.add(W::Scalar::from_count(b.len()) * self.weight_cache[d]);
        }
        sum.value()
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        use std::mem::size_of;
        let ids = self.parent.capacity() + self.degree.capacity() + self.slot.capacity();
        let buckets: usize = self
            .buckets
            .iter()
            .map(|b| b.capacity() * size_of::<u32>())
            .sum();
        ids * size_of::<u32>()
            + buckets
            + self.buckets.capacity() * size_of::<Vec<u32>>()
            + self
                .birth_time
                .as_ref()
                .map_or(0, |v| v.capacity() * size_of::<W::Scalar>())
            + (self.weight_cache.capacity() + self.index.capacity()) * size_of::<W::Scalar>()
    }

    fn ensure_degree(&mut self, d: usize) {
        while self.buckets.len() <= d {
            self.buckets.push(Vec::new());
            let next = self.weight_cache.len();
            self.weight_cache.push(self.weights.weight(next));
        }
        if d >= self.index.capacity() {
            let probes = self.index.probes;
            self.index = Fenwick::from_values(&self.bucket_values(), 2 * (d + 1));
            self.index.probes = probes;
        }
    }

    fn bucket_values(&self) -> Vec<W::Scalar> {
        self.buckets
            .iter()
            .zip(&self.weight_cache)
            .map(|(b, w)| W::Scalar::from_count(b.len()) * *w)
            .collect()
    }

    fn nearest_nonempty(&self, d: usize) -> usize {
        (0..=d)
            .rev()
            .chain(d + 1..=self.max_degree)
            .find(|&e| !self.buckets[e].is_empty())
            .expect("tree has at least one node")
    }

    /// Draws a parent with the attachment law and appends a new leaf.
    /// Returns `(child, parent)`.
    pub fn attach_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (usize, usize) {
        let parent = self.sample_parent(rng);
        (self.add_child(parent), parent)
    }

    /// Draws a node with probability `w(deg j) / total_weight` without
    /// changing the tree (diagnostic counters aside).
    pub fn sample_parent<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let target = W::Scalar::lit(u) * self.total_weight;
        let mut d = self.index.search(target);
        if d > self.max_degree {
            d = self.max_degree;
            self.diagnostics.clamped_searches += 1;
        }
        if self.buckets[d].is_empty() {
            d = self.nearest_nonempty(d);
            self.diagnostics.empty_bucket_fallbacks += 1;
        }
        let j = rng.random_range(0..self.buckets[d].len());
        self.buckets[d][j] as usize
    }

    /// Advances the clock by `Exp(total_weight)` drawn from `clock_rng`, then
    /// attaches with `attach_rng` exactly as [`attach_step`](Self::attach_step).
    pub fn continuous_step<R1, R2>(
        &mut self,
        attach_rng: &mut R1,
        clock_rng: &mut R2,
    ) -> (usize, usize)
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let e: f64 = Exp1.sample(clock_rng);
        self.clock = self.clock + W::Scalar::lit(e) / self.total_weight;
        let step = self.attach_step(attach_rng);
        if let Some(times) = &mut self.birth_time {
            times.push(self.clock);
        }
        step
    }

    /// Attaches a new leaf to `parent`; returns the child id.
    pub fn add_child(&mut self, parent: usize) -> usize {
        let d = self.degree[parent] as usize;
        // Grow buckets and index before touching counts: a rebuild reads them.
        self.ensure_degree(d + 1);
        let pos = self.slot[parent] as usize;
        let bucket = &mut self.buckets[d];
        bucket.swap_remove(pos);
        if let Some(&moved) = bucket.get(pos) {
            self.slot[moved as usize] = pos as u32;
        }

        let up = &mut self.buckets[d + 1];
        self.slot[parent] = up.len() as u32;
        up.push(parent as u32);
        self.degree[parent] = (d + 1) as u32;
        self.max_degree = self.max_degree.max(d + 1);

        let child = self.parent.len();
        self.parent.push(parent as u32);
        self.degree.push(0);
        self.slot.push(self.buckets[0].len() as u32);
        self.buckets[0].push(child as u32);

        let (w0, wd, wd1) = (
            self.weight_cache[0],
            self.weight_cache[d],
            self.weight_cache[d + 1],
        );
        self.index.add(d, -wd);
        self.index.add(d + 1, wd1);
        self.index.add(0, w0);
        self.total_weight = self.total_weight + (wd1 - wd) + w0;

        self.steps_since_refresh += 1;
        if self.steps_since_refresh >= REFRESH_INTERVAL {
            self.refresh();
        }
        child
    }

    /// Recomputes the total weight and rebuilds the index from the buckets.
    pub fn refresh(&mut self) {
        let exact = self.recompute_total_weight();
        let drift = ((exact - self.total_weight) / exact).abs().as_f64();
        self.diagnostics.max_relative_drift = self.diagnostics.max_relative_drift.max(drift);
        self.diagnostics.refreshes += 1;
        self.total_weight = exact;
        let probes = self.index.probes;
        self.index = Fenwick::from_values(&self.bucket_values(), self.index.capacity());
        self.index.probes = probes;
        self.steps_since_refresh = 0;
    }

    pub fn histogram(&self) -> DegreeHistogram {
        let per_degree: Vec<u64> = self.buckets[..=self.max_degree]
            .iter()
            .map(|b| b.len() as u64)
            .collect();
        let mut h = DegreeHistogram::from_degree_counts(&per_degree);
        if self.clock > W::Scalar::zero() {
            h.time_stamp = Some(self.clock.as_f64());
        }
        h
    }

    /// Full O(n) structural check.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.node_count();
        let bad = |msg: String| Err(Error::Inconsistent(msg));
        let degree_sum: u64 = self.degree.iter().map(|&d| d as u64).sum();
        if degree_sum + 1 != n as u64 {
            return bad(format!("degree sum {degree_sum} != n - 1 = {}", n - 1));
        }
        for i in 1..n {
            if self.parent[i] as usize >= i {
                return bad(format!("parent[{i}] = {} is not older", self.parent[i]));
            }
        }
        let mut seen = 0usize;
        for (d, b) in self.buckets.iter().enumerate() {
            for (pos, &node) in b.iter().enumerate() {
                let node = node as usize;
                if self.degree[node] as usize != d || self.slot[node] as usize != pos {
                    return bad(format!("node {node} misplaced in bucket {d}"));
                }
            }
            seen += b.len();
        }
        if seen != n {
            return bad(format!("buckets hold {seen} nodes, expected {n}"));
        }
        let exact = self.recompute_total_weight();
        if ((exact - self.total_weight) / exact).abs() > W::Scalar::lit(1e-9) {
            return bad(format!(
                "total weight {} drifted from {exact}",
                self.total_weight
            ));
        }
        if let Some(t) = &self.birth_time {
            if t.len() != n || t.windows(2).any(|w| w[1] <= w[0]) {
                return bad("birth times are not strictly increasing".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthMode {
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotSchedule {
    Final,
    /// `1, 2, 4, …` up to `n_nodes`, plus `n_nodes` itself.
    PowersOfTwo,
    Explicit(Vec<usize>),
}

impl SnapshotSchedule {
    /// Sorted distinct node counts at which to snapshot.
    pub fn node_counts(&self, n_nodes: usize) -> Result<Vec<usize>> {
        let mut out = match self {
            SnapshotSchedule::Final => vec![n_nodes],
            SnapshotSchedule::PowersOfTwo => {
                let mut v: Vec<usize> = std::iter::successors(Some(1usize), |x| x.checked_mul(2))
                    .take_while(|&x| x <= n_nodes)
                    .collect();
                v.push(n_nodes);
                v
            }
            SnapshotSchedule::Explicit(list) => {
                if let Some(bad) = list.iter().find(|&&x| x == 0 || x > n_nodes) {
                    return Err(Error::InvalidInput(format!(
                        "snapshot at {bad} nodes is outside [1, {n_nodes}]"
                    )));
                }
                list.clone()
            }
        };
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig<W> {
    pub weights: W,
    pub n_nodes: usize,
    pub seed: u64,
    pub mode: GrowthMode,
    pub snapshots: SnapshotSchedule,
    /// Keep `T_n` for every node (continuous mode only).
    pub record_birth_times: bool,
}

impl<W> SimConfig<W> {
    pub fn new(weights: W, n_nodes: usize, seed: u64) -> Self {
        Self {
            weights,
            n_nodes,
            seed,
            mode: GrowthMode::Discrete,
            snapshots: SnapshotSchedule::Final,
            record_birth_times: false,
        }
    }

    pub fn continuous(mut self, record_birth_times: bool) -> Self {
        self.mode = GrowthMode::Continuous;
        self.record_birth_times = record_birth_times;
        self
    }

    pub fn with_snapshots(mut self, snapshots: SnapshotSchedule) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub struct GrowthRun<W: DegreeWeight> {
    pub state: GrowthState<W>,
    pub snapshots: Vec<DegreeHistogram>,
}

/// Grows one tree. Bit-reproducible for a fixed config.
pub fn grow<W: DegreeWeight + Clone>(config: &SimConfig<W>) -> Result<GrowthRun<W>> {
    if config.n_nodes == 0 {
        return Err(Error::InvalidInput("n_nodes must be at least 1".into()));
    }
    if config.record_birth_times && config.mode == GrowthMode::Discrete {
        return Err(Error::InvalidInput(
            "birth times exist only in continuous mode".into(),
        ));
    }
    let schedule = config.snapshots.node_counts(config.n_nodes)?;
    let mut state = GrowthState::with_capacity(
        config.weights.clone(),
        config.n_nodes,
        config.record_birth_times,
    )?;
    let mut attach_rng = stream_rng(config.seed, ATTACH_STREAM);
    let mut clock_rng = stream_rng(config.seed, CLOCK_STREAM);
    let mut snapshots = Vec::with_capacity(schedule.len());
    let mut pending = schedule.into_iter().peekable();
    loop {
        while pending.next_if_eq(&state.node_count()).is_some() {
            snapshots.push(state.histogram());
        }
        if state.node_count() >= config.n_nodes {
            break;
        }
        match config.mode {
            GrowthMode::Discrete => state.attach_step(&mut attach_rng),
            GrowthMode::Continuous => state.continuous_step(&mut attach_rng, &mut clock_rng),
        };
    }
    Ok(GrowthRun { state, snapshots })
}

/// Independent runs, one per seed, in parallel; results in input order.
pub fn grow_many<W: DegreeWeight + Clone>(
    config: &SimConfig<W>,
    seeds: &[u64],
) -> Result<Vec<GrowthRun<W>>> {
    seeds
        .par_iter()
        .map(|&seed| grow(&config.clone().with_seed(seed)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{TailRule, WeightForm};

    fn ba() -> WeightSpec<f64> {
        WeightSpec::linear(1.0, 1.0).unwrap()
    }

    #[test]
    fn single_node_always_parent_zero() {
        for seed in 0..50 {
            let mut s = GrowthState::new(ba(), false);
            let mut rng = stream_rng(seed, ATTACH_STREAM);
            assert_eq!(s.attach_step(&mut rng), (1, 0));
        }
    }

    #[test]
    fn two_node_tree_is_forced() {
        let run = grow(&SimConfig::new(ba(), 2, 7)).unwrap();
        assert_eq!(run.state.parent_of(1), Some(0));
        assert_eq!(run.state.parent_of(0), None);
        assert_eq!(run.snapshots[0].counts, vec![2, 1]);
    }

    #[test]
    fn attach_probabilities_follow_law() {
        let mut s = GrowthState::new(ba(), false);
        s.add_child(0);
        assert!((s.attach_probability(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.attach_probability(1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.total_weight(), 3.0);
    }

    #[test]
    fn invariants_hold_through_growth() {
        for spec in [
            ba(),
            WeightSpec::power_plus(0.5, 1.0).unwrap(),
            WeightSpec::table(
                vec![1.0, 3.0, 2.0],
                TailRule::LinearExtrapolate { a: 1.0, b: 2.0 },
            )
            .unwrap(),
        ] {
            let cfg = SimConfig::new(spec, 5000, 3)
                .continuous(true)
                .with_snapshots(SnapshotSchedule::PowersOfTwo);
            let run = grow(&cfg).unwrap();
            run.state.check_invariants().unwrap();
            assert_eq!(run.snapshots.len(), 14);
            for h in &run.snapshots {
                h.check().unwrap();
                assert!(h.time_stamp.is_some() || h.n_nodes == 1);
            }
            let d = run.state.diagnostics();
            assert_eq!(d.clamped_searches + d.empty_bucket_fallbacks, 0);
        }
    }

    #[test]
    fn discrete_and_continuous_share_the_jump_chain() {
        let spec = WeightSpec::power_plus(0.5, 1.0).unwrap();
        let a = grow(&SimConfig::new(spec.clone(), 3000, 11)).unwrap();
        let b = grow(&SimConfig::new(spec, 3000, 11).continuous(false)).unwrap();
        assert_eq!(a.state.parent, b.state.parent);
        assert!(b.state.clock() > 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SimConfig::new(ba(), 2000, 5);
        let a = grow(&cfg).unwrap();
        let b = grow(&cfg).unwrap();
        assert_eq!(a.state.parent, b.state.parent);
        let c = grow(&cfg.clone().with_seed(6)).unwrap();
        assert_ne!(a.state.parent, c.state.parent);
        let many = grow_many(&cfg, &[5, 6]).unwrap();
        assert_eq!(many[0].state.parent, a.state.parent);
        assert_eq!(many[1].state.parent, c.state.parent);
    }

    #[test]
    fn power_of_two_raw_scaling_is_bit_identical() {
        let base = SimConfig::new(ba(), 4000, 9);
        let raw = WeightSpec::unnormalized(WeightForm::Linear { a: 8.0, b: 8.0 }).unwrap();
        let scaled = grow(&SimConfig::new(raw, 4000, 9)).unwrap();
        assert_eq!(grow(&base).unwrap().state.parent, scaled.state.parent);
    }

    #[test]
    fn snapshot_schedules() {
        assert_eq!(SnapshotSchedule::Final.node_counts(10).unwrap(), vec![10]);
        assert_eq!(
            SnapshotSchedule::PowersOfTwo.node_counts(10).unwrap(),
            vec![1, 2, 4, 8, 10]
        );
        assert_eq!(
            SnapshotSchedule::PowersOfTwo.node_counts(8).unwrap(),
            vec![1, 2, 4, 8]
        );
        assert_eq!(
            SnapshotSchedule::Explicit(vec![5, 1, 5])
                .node_counts(10)
                .unwrap(),
            vec![1, 5]
        );
        assert!(SnapshotSchedule::Explicit(vec![11])
            .node_counts(10)
            .is_err());
        assert!(SnapshotSchedule::Explicit(vec![0]).node_counts(10).is_err());
    }

    #[test]
    fn config_errors() {
        assert!(grow(&SimConfig::new(ba(), 0, 1)).is_err());
        let mut cfg = SimConfig::new(ba(), 10, 1);
        cfg.record_birth_times = true;
        assert!(grow(&cfg).is_err());
        assert!(matches!(
            GrowthState::with_capacity(ba(), usize::MAX, false),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn refresh_resets_drift() {
        let spec = WeightSpec::power_plus(0.5, 1.0).unwrap();
        let mut s = GrowthState::new(spec, false);
        let mut rng = stream_rng(1, ATTACH_STREAM);
        for _ in 0..10_000 {
            s.attach_step(&mut rng);
        }
        s.refresh();
        assert_eq!(s.total_weight(), s.recompute_total_weight());
        assert!(s.diagnostics().max_relative_drift < 1e-12);
    }
}
