//! Coalescent genealogies under piecewise-constant `Ne(t)` with serial sampling.
//!
//! Waiting times are drawn by exact inversion: with `n` lineages the next
//! coalescence happens when `C(n,2) * integral 1/Ne` reaches an `Exp(1)` draw,
//! the integral being closed-form across pieces. If a sampling time comes
//! first, the process jumps to it and the draw is discarded (the hazard is
//! memoryless).
//!
//! Replicate `r` of a batch seeded with `s` uses ChaCha20 seeded with `s` on
//! stream `r`.

pub mod scenario;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::Exp1;

use crate::coalescent::ledger::choose2;
use crate::coalescent::Grid;
use crate::error::{Error, Result};
use crate::hmc::chain_rng;
use crate::treeio::{Node, NodeId, TimeTree};

pub use scenario::{
    make_scenario, parse_sim_spec, write_scenario, Response, Scenario, ScenarioFiles, ScenarioSpec,
};

/// `Ne(t) = levels[k]` on grid interval `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseNe {
    grid: Grid,
    levels: Vec<f64>,
}

impl PiecewiseNe {
    pub fn new(grid: Grid, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != grid.intervals() {
            return Err(Error::Simulation(format!(
                "{} levels for {} intervals",
                levels.len(),
                grid.intervals()
            )));
        }
        if levels.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Simulation("Ne levels must be positive and finite".into()));
        }
        Ok(Self { grid, levels })
    }

    /// Constant `Ne` (a one-point grid with equal levels).
    pub fn constant(ne: f64) -> Result<Self> {
        Self::new(Grid::from_points(vec![1.0])?, vec![ne, ne])
    }

    /// From log-levels `theta`.
    pub fn from_log(grid: Grid, theta: &[f64]) -> Result<Self> {
        Self::new(grid, theta.iter().map(|t| t.exp()).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn value(&self, t: f64) -> f64 {
        self.levels[self.grid.interval_of(t)]
    }

    /// Smallest `t1 >= t0` with `integral_{t0}^{t1} 1/Ne = target`.
    pub fn invert_hazard(&self, t0: f64, target: f64) -> f64 {
        let mut k = self.grid.interval_of(t0);
        let mut t = t0;
        let mut remaining = target;
        loop {
            let (_, end) = self.grid.bounds(k);
            let ne = self.levels[k];
            let capacity = (end - t) / ne;
            if remaining <= capacity {
                return t + remaining * ne;
            }
            remaining -= capacity;
            t = end;
            k += 1;
        }
    }
}

/// Tips per sampling time (backward time, earliest must be 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule(Vec<(f64, usize)>);

impl Schedule {
    pub fn new(mut groups: Vec<(f64, usize)>) -> Result<Self> {
        groups.retain(|&(_, n)| n > 0);
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        if groups.iter().map(|g| g.1).sum::<usize>() < 2 {
            return Err(Error::Simulation("need at least 2 tips".into()));
        }
        if groups.iter().any(|g| !(g.0 >= 0.0) || !g.0.is_finite()) {
            return Err(Error::Simulation("sampling times must be finite and >= 0".into()));
        }
        if groups[0].0 != 0.0 {
            return Err(Error::Simulation("the most recent sampling time must be 0".into()));
        }
        if groups.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Simulation("duplicate sampling time".into()));
        }
        Ok(Self(groups))
    }

    pub fn isochronous(n: usize) -> Result<Self> {
        Self::new(vec![(0.0, n)])
    }

    pub fn groups(&self) -> &[(f64, usize)] {
        &self.0
    }

    pub fn tips(&self) -> usize {
        self.0.iter().map(|g| g.1).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub schedule: Schedule,
    pub ne: PiecewiseNe,
    pub seed: u64,
    /// Replicate index (RNG stream).
    pub stream: u64,
}

pub fn simulate_tree(spec: &SimSpec) -> Result<TimeTree> {
    let mut rng = chain_rng(spec.seed, spec.stream);
    simulate_tree_with(&spec.schedule, &spec.ne, &mut rng)
}

/// Simulate with a caller-supplied generator. Tips are labelled `t1..tn` in
/// sampling order.
pub fn simulate_tree_with<R: Rng + ?Sized>(schedule: &Schedule, ne: &PiecewiseNe, rng: &mut R) -> Result<TimeTree> {
    let n = schedule.tips();
    let mut nodes: Vec<Node> = Vec::with_capacity(2 * n - 1);
    let mut active: Vec<NodeId> = Vec::with_capacity(n);
    let groups = schedule.groups();
    let mut next_group = 0;
    let mut t = 0.0;

    let mut tips = 0;
    let mut add_group = |g: usize, nodes: &mut Vec<Node>, active: &mut Vec<NodeId>| {
        let (time, count) = groups[g];
        for _ in 0..count {
            tips += 1;
            let label = format!("t{tips}");
            nodes.push(Node {
                parent: None,
                children: None,
                height: time,
                label: Some(label),
            });
            active.push(nodes.len() - 1);
        }
    };

    loop {
        if active.len() < 2 {
            if next_group == groups.len() {
                break;
            }
            t = groups[next_group].0;
            add_group(next_group, &mut nodes, &mut active);
            next_group += 1;
            continue;
        }
        let e: f64 = rng.sample(Exp1);
        let t_new = ne.invert_hazard(t, e / choose2(active.len()));
        if next_group < groups.len() && t_new > groups[next_group].0 {
            t = groups[next_group].0;
            add_group(next_group, &mut nodes, &mut active);
            next_group += 1;
            continue;
        }
        t = t_new;
        let pair = sample(rng, active.len(), 2);
        let (i, j) = (pair.index(0), pair.index(1));
        let (a, b) = (active[i], active[j]);
        let id = nodes.len();
        nodes.push(Node {
            parent: None,
            children: Some([a, b]),
            height: t,
            label: None,
        });
        nodes[a].parent = Some(id);
        nodes[b].parent = Some(id);
        let (hi, lo) = (i.max(j), i.min(j));
        active.swap_remove(hi);
        active.swap_remove(lo);
        active.push(id);
    }
    let root = active[0];
    TimeTree::new(nodes, root)
}
