//! Exact s-t maximum flow / minimum cut over integer capacities.
//!
//! The solver is highest-label push-relabel with the gap heuristic. Heights are
//! not capped at `n`, so once the maximum preflow is reached the remaining
//! excess drains back to the source and the solver finishes with a proper
//! flow. The returned source set is everything reachable from `s` in the final
//! residual network, which is the inclusion-minimal minimum cut.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

pub type Capacity = i64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("sum of capacities exceeds the integer range")]
    Overflow,
    #[error("node {node} out of range for a network with {count} nodes")]
    InvalidNode { node: usize, count: usize },
    #[error("source and sink must differ")]
    SameTerminals,
    #[error("negative capacity {0}")]
    NegativeCapacity(Capacity),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: Capacity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNetwork {
    node_count: usize,
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Result<Self, FlowError> {
        for node in [source, sink] {
            if node >= node_count {
                return Err(FlowError::InvalidNode {
                    node,
                    count: node_count,
                });
            }
        }
        if source == sink {
            return Err(FlowError::SameTerminals);
        }
        Ok(Self {
            node_count,
            source,
            sink,
            arcs: Vec::new(),
        })
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: Capacity) -> Result<(), FlowError> {
        for node in [from, to] {
            if node >= self.node_count {
                return Err(FlowError::InvalidNode {
                    node,
                    count: self.node_count,
                });
            }
        }
        if capacity < 0 {
            return Err(FlowError::NegativeCapacity(capacity));
        }
        self.arcs.push(Arc { from, to, capacity });
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Total capacity of arcs leaving `side` (a membership mask).
    pub fn cut_capacity(&self, side: &[bool]) -> Capacity {
        self.arcs
            .iter()
            .filter(|a| side[a.from] && !side[a.to])
            .map(|a| a.capacity)
            .sum()
    }
}

/// Net flow carried between the endpoints of one residual pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairFlow {
    pub a: usize,
    pub b: usize,
    /// Positive when flow runs `a -> b`.
    pub flow: Capacity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutResult {
    pub max_flow_value: Capacity,
    /// Sorted node ids on the source side, always including the source.
    pub source_set: Vec<usize>,
    in_source: Vec<bool>,
    pair_flows: Vec<PairFlow>,
}

impl CutResult {
    pub fn contains(&self, node: usize) -> bool {
        self.in_source.get(node).copied().unwrap_or(false)
    }

    pub fn source_mask(&self) -> &[bool] {
        &self.in_source
    }

    pub fn pair_flows(&self) -> &[PairFlow] {
        &self.pair_flows
    }

    /// Outflow minus inflow at `node` under the computed flow.
    pub fn net_outflow(&self, node: usize) -> Capacity {
        self.pair_flows
            .iter()
            .map(|p| {
                if p.a == node {
                    p.flow
                } else if p.b == node {
                    -p.flow
                } else {
                    0
                }
            })
            .sum()
    }
}

/// Residual network with antiparallel/parallel arcs merged into one pair of
/// half-edges: half-edge `2p` runs `a -> b`, `2p + 1` runs `b -> a`.
struct Residual {
    head: Vec<usize>,
    res: Vec<Capacity>,
    adj_start: Vec<usize>,
    adj: Vec<usize>,
    pairs: Vec<(usize, usize, Capacity)>,
}

impl Residual {
    fn build(net: &FlowNetwork) -> Result<Self, FlowError> {
        let n = net.node_count;
        let mut total: Capacity = 0;
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs: Vec<(usize, usize, Capacity)> = Vec::new();
        let mut res: Vec<Capacity> = Vec::new();
        for arc in &net.arcs {
            total = total.checked_add(arc.capacity).ok_or(FlowError::Overflow)?;
            if arc.from == arc.to {
                continue;
            }
            let key = (arc.from.min(arc.to), arc.from.max(arc.to));
            let p = *index.entry(key).or_insert_with(|| {
                pairs.push((key.0, key.1, 0));
                res.extend([0, 0]);
                pairs.len() - 1
            });
            let half = if arc.from == key.0 { 2 * p } else { 2 * p + 1 };
            res[half] += arc.capacity;
        }
        let mut head = vec![0; res.len()];
        let mut degree = vec![0usize; n + 1];
        for (p, pair) in pairs.iter_mut().enumerate() {
            head[2 * p] = pair.1;
            head[2 * p + 1] = pair.0;
            pair.2 = res[2 * p];
            degree[pair.0 + 1] += 1;
            degree[pair.1 + 1] += 1;
        }
        for v in 0..n {
            degree[v + 1] += degree[v];
        }
        let adj_start = degree.clone();
        let mut fill = degree;
        let mut adj = vec![0; res.len()];
        for (p, &(a, b, _)) in pairs.iter().enumerate() {
            adj[fill[a]] = 2 * p;
            fill[a] += 1;
            adj[fill[b]] = 2 * p + 1;
            fill[b] += 1;
        }
        Ok(Self {
            head,
            res,
            adj_start,
            adj,
            pairs,
        })
    }

    fn out_edges(&self, v: usize) -> &[usize] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }
}

struct PushRelabel<'a> {
    g: &'a mut Residual,
    n: usize,
    source: usize,
    sink: usize,
    height: Vec<usize>,
    excess: Vec<Capacity>,
    current: Vec<usize>,
    active: Vec<Vec<usize>>,
    count: Vec<usize>,
    highest: usize,
}

impl<'a> PushRelabel<'a> {
    fn new(g: &'a mut Residual, n: usize, source: usize, sink: usize) -> Self {
        Self {
            g,
            n,
            source,
            sink,
            height: vec![0; n],
            excess: vec![0; n],
            current: vec![0; n],
            active: vec![Vec::new(); 2 * n + 1],
            count: vec![0; 2 * n + 1],
            highest: 0,
        }
    }

    /// Exact distance-to-sink labels; nodes that cannot reach the sink start
    /// at `n`, the source's height.
    fn global_relabel(&mut self) {
        let n = self.n;
        self.height.iter_mut().for_each(|h| *h = n);
        self.height[self.sink] = 0;
        let mut queue = VecDeque::from([self.sink]);
        while let Some(v) = queue.pop_front() {
            for &e in self.g.out_edges(v) {
                let u = self.g.head[e];
                // residual arc u -> v is the twin of e
                if u != self.source && self.height[u] == n && self.g.res[e ^ 1] > 0 && u != self.sink
                {
                    self.height[u] = self.height[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        self.height[self.source] = n;
        self.count.iter_mut().for_each(|c| *c = 0);
        for v in 0..n {
            if v != self.source && v != self.sink {
                self.count[self.height[v]] += 1;
            }
        }
    }

    fn activate(&mut self, v: usize) {
        let h = self.height[v];
        self.active[h].push(v);
        self.highest = self.highest.max(h);
    }

    fn push(&mut self, u: usize, e: usize) {
        let v = self.g.head[e];
        let delta = self.excess[u].min(self.g.res[e]);
        self.g.res[e] -= delta;
        self.g.res[e ^ 1] += delta;
        self.excess[u] -= delta;
        let was_idle = self.excess[v] == 0;
        self.excess[v] += delta;
        if was_idle && v != self.source && v != self.sink {
            self.activate(v);
        }
    }

    fn relabel(&mut self, u: usize) {
        let old = self.height[u];
        let mut lowest = usize::MAX;
        for &e in self.g.out_edges(u) {
            if self.g.res[e] > 0 {
                lowest = lowest.min(self.height[self.g.head[e]]);
            }
        }
        // u holds excess, so a residual path back to the source exists
        debug_assert!(lowest != usize::MAX);
        let mut new_height = lowest + 1;
        self.count[old] -= 1;
        if old < self.n && self.count[old] == 0 {
            // gap: nothing above `old` can reach the sink any more
            for w in 0..self.n {
                let h = self.height[w];
                if w != self.source && w != self.sink && w != u && h > old && h < self.n {
                    self.count[h] -= 1;
                    self.height[w] = self.n + 1;
                    self.count[self.n + 1] += 1;
                    self.current[w] = 0;
                    if self.excess[w] > 0 {
                        self.activate(w);
                    }
                }
            }
            new_height = new_height.max(self.n + 1);
        }
        self.height[u] = new_height;
        self.count[new_height] += 1;
        self.current[u] = 0;
    }

    fn discharge(&mut self, u: usize) {
        while self.excess[u] > 0 {
            let edges_len = self.g.adj_start[u + 1] - self.g.adj_start[u];
            if self.current[u] == edges_len {
                self.relabel(u);
                continue;
            }
            let e = self.g.adj[self.g.adj_start[u] + self.current[u]];
            let v = self.g.head[e];
            if self.g.res[e] > 0 && self.height[u] == self.height[v] + 1 {
                self.push(u, e);
            } else {
                self.current[u] += 1;
            }
        }
    }

    fn run(&mut self) {
        self.global_relabel();
        let s = self.source;
        let start = self.g.adj_start[s];
        let end = self.g.adj_start[s + 1];
        for k in start..end {
            let e = self.g.adj[k];
            let cap = self.g.res[e];
            if cap > 0 {
                self.excess[s] += cap;
                self.push(s, e);
            }
        }
        self.excess[s] = 0;
        loop {
            while self.active[self.highest].is_empty() && self.highest > 0 {
                self.highest -= 1;
            }
            let Some(u) = self.active[self.highest].pop() else {
                break;
            };
            if self.excess[u] == 0 || self.height[u] != self.highest {
                continue;
            }
            self.discharge(u);
        }
    }
}

pub fn max_flow_min_cut(net: &FlowNetwork) -> Result<CutResult, FlowError> {
    let n = net.node_count;
    let mut g = Residual::build(net)?;
    let mut solver = PushRelabel::new(&mut g, n, net.source, net.sink);
    solver.run();
    let max_flow_value = solver.excess[net.sink];

    let mut in_source = vec![false; n];
    in_source[net.source] = true;
    let mut queue = VecDeque::from([net.source]);
    while let Some(v) = queue.pop_front() {
        for &e in g.out_edges(v) {
            let w = g.head[e];
            if g.res[e] > 0 && !in_source[w] {
                in_source[w] = true;
                queue.push_back(w);
            }
        }
    }
    let source_set = (0..n).filter(|&v| in_source[v]).collect();
    let pair_flows = g
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(a, b, cap_ab))| PairFlow {
            a,
            b,
            flow: cap_ab - g.res[2 * p],
        })
        .collect();
    Ok(CutResult {
        max_flow_value,
        source_set,
        in_source,
        pair_flows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn network(n: usize, arcs: &[(usize, usize, Capacity)]) -> FlowNetwork {
        let mut net = FlowNetwork::new(n, 0, n - 1).unwrap();
        for &(a, b, c) in arcs {
            net.add_arc(a, b, c).unwrap();
        }
        net
    }

    /// Minimum crossing capacity over every cut separating s from t.
    fn brute_min_cut(net: &FlowNetwork) -> Capacity {
        let n = net.node_count();
        let inner: Vec<usize> = (0..n).filter(|&v| v != net.source() && v != net.sink()).collect();
        let mut best = Capacity::MAX;
        for mask in 0u32..(1 << inner.len()) {
            let mut side = vec![false; n];
            side[net.source()] = true;
            for (bit, &v) in inner.iter().enumerate() {
                side[v] = mask >> bit & 1 == 1;
            }
            best = best.min(net.cut_capacity(&side));
        }
        best
    }

    #[test]
    fn single_arc() {
        let net = network(2, &[(0, 1, 7)]);
        let cut = max_flow_min_cut(&net).unwrap();
        assert_eq!(cut.max_flow_value, 7);
        assert_eq!(cut.source_set, vec![0]);
    }

    #[test]
    fn series_bottleneck_at_source() {
        // s=0, a=1, t=2
        let net = network(3, &[(0, 1, 3), (1, 2, 5)]);
        let cut = max_flow_min_cut(&net).unwrap();
        assert_eq!(cut.max_flow_value, 3);
        assert_eq!(cut.source_set, vec![0]);
        assert_eq!(brute_min_cut(&net), 3);
    }

    #[test]
    fn diamond_with_cross_arc() {
        // s=0, a=1, b=2, t=3
        let net = network(4, &[(0, 1, 2), (0, 2, 2), (1, 3, 1), (2, 3, 1), (1, 2, 10)]);
        let cut = max_flow_min_cut(&net).unwrap();
        assert_eq!(cut.max_flow_value, 2);
        assert_eq!(cut.source_set, vec![0, 1, 2]);
        assert_eq!(brute_min_cut(&net), 2);
        assert_eq!(net.cut_capacity(cut.source_mask()), 2);
    }

    #[test]
    fn parallel_and_antiparallel_arcs_merge() {
        let net = network(3, &[(0, 1, 2), (0, 1, 3), (1, 0, 4), (1, 2, 9)]);
        let cut = max_flow_min_cut(&net).unwrap();
        assert_eq!(cut.max_flow_value, 5);
        assert_eq!(cut.pair_flows().len(), 2);
    }

    #[test]
    fn disconnected_sink() {
        let net = network(3, &[(0, 1, 4)]);
        let cut = max_flow_min_cut(&net).unwrap();
        assert_eq!(cut.max_flow_value, 0);
        assert_eq!(cut.source_set, vec![0, 1]);
    }

    #[test]
    fn overflow_detected() {
        let net = network(3, &[(0, 1, Capacity::MAX), (1, 2, 1)]);
        assert_eq!(max_flow_min_cut(&net), Err(FlowError::Overflow));
    }

    #[test]
    fn invalid_construction() {
        assert_eq!(FlowNetwork::new(2, 0, 0), Err(FlowError::SameTerminals));
        assert!(FlowNetwork::new(2, 0, 2).is_err());
        let mut net = FlowNetwork::new(2, 0, 1).unwrap();
        assert_eq!(net.add_arc(0, 1, -1), Err(FlowError::NegativeCapacity(-1)));
    }

    #[test]
    fn conservation_on_layered_network() {
        let arcs = [
            (0, 1, 5),
            (0, 2, 4),
            (1, 3, 3),
            (1, 4, 2),
            (2, 3, 6),
            (2, 4, 1),
            (3, 5, 4),
            (4, 5, 7),
            (3, 4, 2),
        ];
        let net = network(6, &arcs);
        let cut = max_flow_min_cut(&net).unwrap();
        assert_eq!(cut.max_flow_value, brute_min_cut(&net));
        for v in 1..5 {
            assert_eq!(cut.net_outflow(v), 0, "node {v}");
        }
        assert_eq!(cut.net_outflow(0), cut.max_flow_value);
    }
}
