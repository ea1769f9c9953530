//! Connected path filtering baseline.
//!
//! A defective chip survives when some simple path of adjacent defective
//! chips with at least `M` chips passes through it. Functional chips are never
//! relabeled. Longest simple path is NP-hard, so the path search carries an
//! expansion budget; a component that exhausts it falls back to the
//! component-size rule and the result is flagged approximate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::filter::{FilterError, FilterResult, Rational, SpatialFilter};
use crate::wafer::{build_graph, Neighborhood, WaferMap};

/// Components up to this size are always searched exactly.
pub const EXACT_COMPONENT_LIMIT: usize = 24;

const EXACT_BUDGET: u64 = 200_000_000;
const LARGE_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpfMode {
    /// Simple-path semantics with budgeted search.
    #[default]
    Path,
    /// Keep a whole component iff it has at least `M` chips.
    ComponentSize,
}

impl std::str::FromStr for CpfMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(CpfMode::Path),
            "component-size" | "component" => Ok(CpfMode::ComponentSize),
            other => Err(format!("unknown cpf mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpfConfig {
    m_threshold: usize,
    nb: Neighborhood,
    mode: CpfMode,
}

impl CpfConfig {
    pub fn new(m_threshold: usize, nb: Neighborhood, mode: CpfMode) -> Result<Self, FilterError> {
        if m_threshold == 0 {
            return Err(FilterError::InvalidConfig(
                "CPF threshold M must be >= 1".into(),
            ));
        }
        Ok(Self {
            m_threshold,
            nb,
            mode,
        })
    }

    pub fn m_threshold(&self) -> usize {
        self.m_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Search {
    Done,
    OutOfBudget,
}

/// Marks every node lying on a simple path of exactly `len` nodes. Any longer
/// path through a node contains a window of `len` nodes through it, so this
/// decides membership for "at least `len`".
struct PathMarker<'a> {
    adj: &'a [Vec<usize>],
    len: usize,
    budget: u64,
    marked: Vec<bool>,
    unmarked: usize,
    on_path: Vec<bool>,
    path: Vec<usize>,
    seen: Vec<u32>,
    epoch: u32,
    queue: VecDeque<usize>,
    stop_on_first: bool,
    found: bool,
}

impl<'a> PathMarker<'a> {
    fn new(adj: &'a [Vec<usize>], len: usize, budget: u64) -> Self {
        let n = adj.len();
        Self {
            adj,
            len,
            budget,
            marked: vec![false; n],
            unmarked: n,
            on_path: vec![false; n],
            path: Vec::with_capacity(len),
            seen: vec![0; n],
            epoch: 0,
            queue: VecDeque::new(),
            stop_on_first: false,
            found: false,
        }
    }

    fn finished(&self) -> bool {
        self.unmarked == 0 || (self.stop_on_first && self.found)
    }

    /// Off-path nodes reachable from `from`, counting up to `need`.
    fn reachable_at_least(&mut self, from: usize, need: usize) -> bool {
        self.epoch += 1;
        let epoch = self.epoch;
        self.queue.clear();
        self.queue.push_back(from);
        self.seen[from] = epoch;
        let mut count = 0;
        while let Some(v) = self.queue.pop_front() {
            for &w in &self.adj[v] {
                if self.seen[w] != epoch && !self.on_path[w] {
                    self.seen[w] = epoch;
                    count += 1;
                    if count >= need {
                        return true;
                    }
                    self.queue.push_back(w);
                }
            }
        }
        false
    }

    fn extend(&mut self) -> Search {
        if self.budget == 0 {
            return Search::OutOfBudget;
        }
        self.budget -= 1;
        if self.path.len() == self.len {
            self.found = true;
            for i in 0..self.path.len() {
                let v = self.path[i];
                if !self.marked[v] {
                    self.marked[v] = true;
                    self.unmarked -= 1;
                }
            }
            return Search::Done;
        }
        let end = *self.path.last().expect("non-empty path");
        if !self.reachable_at_least(end, self.len - self.path.len()) {
            return Search::Done;
        }
        for k in 0..self.adj[end].len() {
            let next = self.adj[end][k];
            if self.on_path[next] {
                continue;
            }
            self.on_path[next] = true;
            self.path.push(next);
            let r = self.extend();
            self.path.pop();
            self.on_path[next] = false;
            if r == Search::OutOfBudget {
                return r;
            }
            if self.finished() {
                return Search::Done;
            }
        }
        Search::Done
    }

    fn run(&mut self) -> Search {
        for start in 0..self.adj.len() {
            if self.finished() {
                break;
            }
            self.on_path[start] = true;
            self.path.push(start);
            let r = self.extend();
            self.path.pop();
            self.on_path[start] = false;
            if r == Search::OutOfBudget {
                return r;
            }
        }
        Search::Done
    }
}

fn is_connected(adj: &[Vec<usize>]) -> bool {
    if adj.is_empty() {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    seen[0] = true;
    let mut stack = vec![0];
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == adj.len()
}

/// True iff the connected graph `adj` has a simple path with at least
/// `min_nodes` nodes. Exhaustive with reachability pruning.
pub fn longest_simple_path_at_least(
    adj: &[Vec<usize>],
    min_nodes: usize,
) -> Result<bool, FilterError> {
    if min_nodes == 0 {
        return Err(FilterError::InvalidConfig("path length must be >= 1".into()));
    }
    if !is_connected(adj) {
        return Err(FilterError::Internal("component is not connected".into()));
    }
    if adj.len() < min_nodes {
        return Ok(false);
    }
    if min_nodes == 1 {
        return Ok(true);
    }
    let mut marker = PathMarker::new(adj, min_nodes, u64::MAX);
    marker.stop_on_first = true;
    marker.run();
    Ok(marker.found)
}

/// Connected components of the defective chips, as lists of node ids.
pub(crate) fn defect_components(adj: &[Vec<usize>], defective: &[bool]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut comp_of = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if !defective[start] || comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![start];
        comp_of[start] = id;
        let mut head = 0;
        while head < members.len() {
            let v = members[head];
            head += 1;
            for &w in &adj[v] {
                if defective[w] && comp_of[w] == usize::MAX {
                    comp_of[w] = id;
                    members.push(w);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Keeps nodes of one component; returns `true` if the budget ran out.
fn keep_component(
    adj: &[Vec<usize>],
    members: &[usize],
    cfg: &CpfConfig,
    labels: &mut [bool],
) -> bool {
    let m = cfg.m_threshold;
    if members.len() < m {
        return false;
    }
    if m == 1 || cfg.mode == CpfMode::ComponentSize {
        members.iter().for_each(|&v| labels[v] = true);
        return false;
    }
    let mut local = vec![usize::MAX; adj.len()];
    for (k, &v) in members.iter().enumerate() {
        local[v] = k;
    }
    let sub: Vec<Vec<usize>> = members
        .iter()
        .map(|&v| {
            adj[v]
                .iter()
                .filter(|&&w| local[w] != usize::MAX)
                .map(|&w| local[w])
                .collect()
        })
        .collect();
    let budget = if members.len() <= EXACT_COMPONENT_LIMIT {
        EXACT_BUDGET
    } else {
        LARGE_BUDGET
    };
    let mut marker = PathMarker::new(&sub, m, budget);
    match marker.run() {
        Search::Done => {
            for (k, &v) in members.iter().enumerate() {
                labels[v] = marker.marked[k];
            }
            false
        }
        Search::OutOfBudget => {
            members.iter().for_each(|&v| labels[v] = true);
            true
        }
    }
}

pub fn cpf_filter(map: &WaferMap, cfg: &CpfConfig) -> Result<FilterResult, FilterError> {
    let graph = build_graph(map, cfg.nb);
    if graph.node_count() == 0 {
        return Err(FilterError::EmptyWafer);
    }
    let adj = graph.adjacency_lists();
    let defective: Vec<bool> = graph
        .coords
        .iter()
        .map(|&(r, c)| map.get(r, c).is_some_and(|s| s.is_defective()))
        .collect();
    let mut labels = vec![false; graph.node_count()];
    let mut approximate = false;
    for members in defect_components(&adj, &defective) {
        approximate |= keep_component(&adj, &members, cfg, &mut labels);
    }
    let kept = labels.iter().filter(|&&x| x).count();
    let mut result = FilterResult::from_labels(labels, Rational::from_integer(kept as i64));
    result.approximate = approximate;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct CpfFilter {
    cfg: CpfConfig,
}

impl CpfFilter {
    pub fn new(cfg: CpfConfig) -> Self {
        Self { cfg }
    }
}

impl SpatialFilter for CpfFilter {
    fn name(&self) -> &'static str {
        "cpf"
    }

    fn describe(&self) -> String {
        format!(
            "cpf(M={}, nb={:?}, mode={:?})",
            self.cfg.m_threshold, self.cfg.nb, self.cfg.mode
        )
    }

    fn filter(&self, map: &WaferMap) -> Result<FilterResult, FilterError> {
        cpf_filter(map, &self.cfg)
    }
}
