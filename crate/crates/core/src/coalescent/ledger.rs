//! Per-interval event bookkeeping.
//!
//! Node heights are merged into one time-ordered stream (ties: samplings
//! before coalescences, then node id), split at grid points, and reduced to
//! the two sufficient statistics the likelihood needs per interval: the
//! coalescent count `m_k` and the lineage-weighted duration
//! `w_k = sum_j C(n_kj, 2) (t_kj - t_k,j-1)`.

use super::grid::Grid;
use crate::error::{Error, Result};
use crate::treeio::{NodeId, TimeTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Sampling,
    Coalescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Lineages present immediately before the event.
    pub lineages_before: usize,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub start: f64,
    pub end: f64,
    pub lineages_at_start: usize,
    pub events: Vec<Event>,
    pub coalescents: usize,
    pub samplings: usize,
    pub weighted_duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalLedger {
    intervals: Vec<IntervalRecord>,
    tips: usize,
}

pub(crate) fn choose2(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        (n * (n - 1) / 2) as f64
    }
}

impl IntervalLedger {
    pub fn intervals(&self) -> &[IntervalRecord] {
        &self.intervals
    }

    pub fn tips(&self) -> usize {
        self.tips
    }

    /// `m_k` for every interval, as reals.
    pub fn coalescent_counts(&self) -> Vec<f64> {
        self.intervals.iter().map(|r| r.coalescents as f64).collect()
    }

    /// `w_k` for every interval.
    pub fn weighted_durations(&self) -> Vec<f64> {
        self.intervals.iter().map(|r| r.weighted_duration).collect()
    }

    /// Lineage count after the last event.
    pub fn final_lineages(&self) -> usize {
        self.intervals
            .iter()
            .flat_map(|r| &r.events)
            .last()
            .map_or(0, |e| match e.kind {
                EventKind::Sampling => e.lineages_before + 1,
                EventKind::Coalescent => e.lineages_before - 1,
            })
    }
}

/// Split a tree's event stream on the grid.
pub fn extract_ledger(tree: &TimeTree, grid: &Grid) -> Result<IntervalLedger> {
    let root_height = tree.root_height();
    if !(root_height > 0.0) {
        return Err(Error::InvalidTree("root height is zero".into()));
    }
    let mut events: Vec<(f64, EventKind, NodeId)> = tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, n)| {
            let kind = if n.is_tip() {
                EventKind::Sampling
            } else {
                EventKind::Coalescent
            };
            (n.height, kind, id)
        })
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let m = grid.intervals();
    let points = grid.points();
    let mut intervals: Vec<IntervalRecord> = (0..m)
        .map(|k| {
            let (start, end) = grid.bounds(k);
            IntervalRecord {
                start,
                end,
                lineages_at_start: 0,
                events: Vec::new(),
                coalescents: 0,
                samplings: 0,
                weighted_duration: 0.0,
            }
        })
        .collect();

    let mut k = 0;
    let mut now = 0.0;
    let mut lineages = 0usize;
    for (time, kind, node) in events {
        while k + 1 < m && time > points[k] {
            intervals[k].weighted_duration += choose2(lineages) * (points[k] - now);
            now = points[k];
            k += 1;
            intervals[k].lineages_at_start = lineages;
        }
        intervals[k].weighted_duration += choose2(lineages) * (time - now);
        now = time;
        let record = &mut intervals[k];
        record.events.push(Event {
            time,
            kind,
            lineages_before: lineages,
            node,
        });
        match kind {
            EventKind::Sampling => {
                record.samplings += 1;
                lineages += 1;
            }
            EventKind::Coalescent => {
                if lineages < 2 {
                    return Err(Error::InvalidTree(format!(
                        "coalescence at {time} with {lineages} lineage(s)"
                    )));
                }
                record.coalescents += 1;
                lineages -= 1;
            }
        }
    }
    if lineages != 1 {
        return Err(Error::InvalidTree(format!("{lineages} lineages remain after the root")));
    }
    // Intervals past the root carry one lineage and no weight.
    for rec in intervals.iter_mut().skip(k + 1) {
        rec.lineages_at_start = 1;
    }
    let last = intervals.last_mut().expect("grid has at least two intervals");
    last.end = root_height.max(last.start);

    Ok(IntervalLedger {
        intervals,
        tips: tree.tip_count(),
    })
}

/// Ledgers for one or more loci on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentData {
    grid: Grid,
    ledgers: Vec<IntervalLedger>,
    counts: Vec<Vec<f64>>,
    durations: Vec<Vec<f64>>,
}

impl CoalescentData {
    pub fn new(grid: Grid, ledgers: Vec<IntervalLedger>) -> Result<Self> {
        if ledgers.is_empty() {
            return Err(Error::Dimension("at least one locus is required".into()));
        }
        if ledgers.iter().any(|l| l.intervals().len() != grid.intervals()) {
            return Err(Error::Dimension("ledger built on a different grid".into()));
        }
        let counts = ledgers.iter().map(IntervalLedger::coalescent_counts).collect();
        let durations = ledgers.iter().map(IntervalLedger::weighted_durations).collect();
        Ok(Self {
            grid,
            ledgers,
            counts,
            durations,
        })
    }

    pub fn from_trees(trees: &[TimeTree], grid: Grid) -> Result<Self> {
        let ledgers = trees
            .iter()
            .map(|t| extract_ledger(t, &grid))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, ledgers)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ledgers(&self) -> &[IntervalLedger] {
        &self.ledgers
    }

    pub fn loci(&self) -> usize {
        self.ledgers.len()
    }

    pub fn intervals(&self) -> usize {
        self.grid.intervals()
    }

    /// Per-locus `m_k`.
    pub fn counts(&self) -> &[Vec<f64>] {
        &self.counts
    }

    /// Per-locus `w_k`.
    pub fn durations(&self) -> &[Vec<f64>] {
        &self.durations
    }

    /// `w_k` summed over loci.
    pub fn total_durations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals()];
        for w in &self.durations {
            for (o, x) in out.iter_mut().zip(w) {
                *o += x;
            }
        }
        out
    }

    /// `m_k` summed over loci.
    pub fn total_counts(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.intervals()];
        for m in &self.counts {
            for (o, x) in out.iter_mut().zip(m) {
                *o += x;
            }
        }
        out
    }
}
