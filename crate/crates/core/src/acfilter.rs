//! Adjacency-clustering spatial filter.
//!
//! With binary defect data the clustering objective
//! `sum_i w_i x_i + sum_[i,j] u_ij |x_i - x_j|` is a minimum s-excess
//! problem. Functional chips carry `w_i = +w_mag`, defective chips
//! `w_i = -w_mag`. It is solved exactly by one minimum cut: every edge becomes
//! two antiparallel arcs of capacity `u_ij`, positive weights become arcs to
//! the sink, negative weights arcs from the source, and the kept chips are the
//! source side of the cut.

use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::filter::{FilterError, FilterResult, Rational, SpatialFilter};
use crate::flow::{max_flow_min_cut, Capacity, FlowNetwork};
use crate::wafer::{build_graph, AdjacencyGraph, CellState, Neighborhood, WaferMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcConfig {
    u: Rational,
    w_mag: Rational,
    nb: Neighborhood,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            u: Rational::new(1, 2),
            w_mag: Rational::from_integer(1),
            nb: Neighborhood::King,
        }
    }
}

impl AcConfig {
    pub fn new(u: Rational, w_mag: Rational, nb: Neighborhood) -> Result<Self, FilterError> {
        if u.is_negative() {
            return Err(FilterError::InvalidConfig(format!(
                "separation cost u must be >= 0, got {u}"
            )));
        }
        if !w_mag.is_positive() {
            return Err(FilterError::InvalidConfig(format!(
                "deviation magnitude must be > 0, got {w_mag}"
            )));
        }
        Ok(Self { u, w_mag, nb })
    }

    pub fn u(&self) -> Rational {
        self.u
    }

    pub fn w_mag(&self) -> Rational {
        self.w_mag
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.nb
    }

    /// Signed deviation weights in node order.
    pub fn deviation_weights(&self, map: &WaferMap) -> Vec<Rational> {
        map.cells()
            .iter()
            .filter(|c| c.in_mask())
            .map(|&c| {
                if c == CellState::Defective {
                    -self.w_mag
                } else {
                    self.w_mag
                }
            })
            .collect()
    }
}

/// Evaluates the binary clustering objective for arbitrary weights and edge
/// costs. `edge_costs` is aligned with `graph.edges`.
pub fn s_excess_objective(
    graph: &AdjacencyGraph,
    weights: &[Rational],
    edge_costs: &[Rational],
    labels: &[bool],
) -> Result<Rational, FilterError> {
    let n = graph.node_count();
    for len in [weights.len(), labels.len()] {
        if len != n {
            return Err(FilterError::Wafer(crate::wafer::WaferError::Dimension {
                expected: n,
                actual: len,
            }));
        }
    }
    if edge_costs.len() != graph.edge_count() {
        return Err(FilterError::Wafer(crate::wafer::WaferError::Dimension {
            expected: graph.edge_count(),
            actual: edge_costs.len(),
        }));
    }
    let mut total = Rational::zero();
    for (w, &x) in weights.iter().zip(labels) {
        if x {
            total += *w;
        }
    }
    for (&(i, j), &u) in graph.edges.iter().zip(edge_costs) {
        if labels[i] != labels[j] {
            total += u;
        }
    }
    Ok(total)
}

/// Solves the minimum s-excess problem on `graph` exactly.
///
/// All rationals are multiplied by the LCM of their denominators so the cut
/// is computed over integers.
pub fn solve_s_excess(
    graph: &AdjacencyGraph,
    weights: &[Rational],
    edge_costs: &[Rational],
) -> Result<FilterResult, FilterError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(FilterError::EmptyWafer);
    }
    if weights.len() != n || edge_costs.len() != graph.edge_count() {
        return Err(FilterError::InvalidConfig(
            "weights or edge costs do not match the graph".into(),
        ));
    }
    if let Some(u) = edge_costs.iter().find(|u| u.is_negative()) {
        return Err(FilterError::InvalidConfig(format!(
            "negative separation cost {u}"
        )));
    }
    let scale = weights
        .iter()
        .chain(edge_costs)
        .fold(1i64, |acc, r| acc.lcm(r.denom()));
    let to_int = |r: &Rational| -> Result<Capacity, FilterError> {
        r.numer()
            .checked_mul(scale / r.denom())
            .ok_or(FilterError::Flow(crate::flow::FlowError::Overflow))
    };

    let (source, sink) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2, source, sink)?;
    for (&(i, j), u) in graph.edges.iter().zip(edge_costs) {
        let cap = to_int(u)?;
        if cap > 0 {
            net.add_arc(i, j, cap)?;
            net.add_arc(j, i, cap)?;
        }
    }
    for (i, w) in weights.iter().enumerate() {
        let w = to_int(w)?;
        if w > 0 {
            net.add_arc(i, sink, w)?;
        } else if w < 0 {
            net.add_arc(source, i, -w)?;
        }
    }
    let cut = max_flow_min_cut(&net)?;
    let labels: Vec<bool> = (0..n).map(|i| cut.contains(i)).collect();
    let objective = s_excess_objective(graph, weights, edge_costs, &labels)?;

    // cut capacity = objective + sum of |negative weights|
    let negative_mass: Rational = weights
        .iter()
        .filter(|w| w.is_negative())
        .fold(Rational::zero(), |acc, w| acc - *w);
    if Rational::new(cut.max_flow_value, scale) != objective + negative_mass {
        return Err(FilterError::Internal(
            "min-cut value disagrees with the recomputed objective".into(),
        ));
    }
    Ok(FilterResult::from_labels(labels, objective))
}

pub fn ac_filter(map: &WaferMap, cfg: &AcConfig) -> Result<FilterResult, FilterError> {
    let graph = build_graph(map, cfg.nb);
    if graph.node_count() == 0 {
        return Err(FilterError::EmptyWafer);
    }
    let weights = cfg.deviation_weights(map);
    let costs = vec![cfg.u; graph.edge_count()];
    solve_s_excess(&graph, &weights, &costs)
}

pub fn ac_objective(map: &WaferMap, cfg: &AcConfig, labels: &[bool]) -> Result<Rational, FilterError> {
    let graph = build_graph(map, cfg.nb);
    let weights = cfg.deviation_weights(map);
    let costs = vec![cfg.u; graph.edge_count()];
    s_excess_objective(&graph, &weights, &costs, labels)
}

/// Grid coordinates of kept chips, row-major.
pub fn filtered_points(map: &WaferMap, result: &FilterResult) -> Vec<(usize, usize)> {
    map.in_mask_coords()
        .into_iter()
        .zip(&result.labels)
        .filter(|(_, &keep)| keep)
        .map(|(rc, _)| rc)
        .collect()
}

#[derive(Debug, Clone)]
pub struct AcFilter {
    cfg: AcConfig,
}

impl AcFilter {
    pub fn new(cfg: AcConfig) -> Self {
        Self { cfg }
    }
}

impl SpatialFilter for AcFilter {
    fn name(&self) -> &'static str {
        "ac"
    }

    fn describe(&self) -> String {
        format!(
            "ac(u={}, w_mag={}, nb={:?})",
            self.cfg.u, self.cfg.w_mag, self.cfg.nb
        )
    }

    fn filter(&self, map: &WaferMap) -> Result<FilterResult, FilterError> {
        ac_filter(map, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wafer::{parse_wafer, GridFormat};
    use proptest::prelude::*;

    fn half() -> Rational {
        Rational::new(1, 2)
    }

    fn king(u: Rational) -> AcConfig {
        AcConfig::new(u, Rational::from_integer(1), Neighborhood::King).unwrap()
    }

    fn hole_wafer() -> WaferMap {
        parse_wafer("111\n101\n111\n", GridFormat::Ascii).unwrap()
    }

    /// Exhaustive minimum over every labeling of the in-mask chips.
    fn brute_minimum(map: &WaferMap, cfg: &AcConfig) -> Rational {
        let n = map.in_mask_count();
        (0u32..1 << n)
            .map(|mask| {
                let labels: Vec<bool> = (0..n).map(|b| mask >> b & 1 == 1).collect();
                ac_objective(map, cfg, &labels).unwrap()
            })
            .min()
            .unwrap()
    }

    #[test]
    fn zero_separation_reproduces_data() {
        let map = parse_wafer(".10\n011\n10.\n", GridFormat::Ascii).unwrap();
        let res = ac_filter(&map, &king(Rational::zero())).unwrap();
        let observed: Vec<bool> = map
            .cells()
            .iter()
            .filter(|c| c.in_mask())
            .map(|c| c.is_defective())
            .collect();
        assert_eq!(res.labels, observed);
        assert_eq!(res.objective_value, Rational::from_integer(-4));
    }

    #[test]
    fn hole_is_filled() {
        let map = hole_wafer();
        let cfg = king(half());
        let res = ac_filter(&map, &cfg).unwrap();
        assert_eq!(res.labels, vec![true; 9]);
        assert_eq!(res.objective_value, Rational::from_integer(-7));
        assert_eq!(brute_minimum(&map, &cfg), Rational::from_integer(-7));
        assert_eq!(filtered_points(&map, &res).len(), 9);
    }

    #[test]
    fn isolated_defect_is_removed() {
        let map = parse_wafer("00000\n00000\n00100\n00000\n00000\n", GridFormat::Ascii).unwrap();
        let res = ac_filter(&map, &king(half())).unwrap();
        assert!(res.labels.iter().all(|&x| !x));
        assert_eq!(res.objective_value, Rational::zero());
        // keeping the center alone: -1 + 8 * 1/2
        let mut keep_center = vec![false; 25];
        keep_center[12] = true;
        assert_eq!(
            ac_objective(&map, &king(half()), &keep_center).unwrap(),
            Rational::from_integer(3)
        );
    }

    #[test]
    fn objective_examples() {
        let map = hole_wafer();
        let cfg = king(half());
        assert_eq!(ac_objective(&map, &cfg, &[false; 9]).unwrap(), Rational::zero());
        let observed: Vec<bool> = (0..9).map(|k| k != 4).collect();
        assert_eq!(ac_objective(&map, &cfg, &observed).unwrap(), Rational::from_integer(-4));
        assert_eq!(ac_objective(&map, &cfg, &[true; 9]).unwrap(), Rational::from_integer(-7));
        assert!(matches!(
            ac_objective(&map, &cfg, &[true; 3]),
            Err(FilterError::Wafer(_))
        ));
    }

    #[test]
    fn filtered_points_follow_labels() {
        let map = hole_wafer();
        let none = FilterResult::from_labels(vec![false; 9], Rational::zero());
        assert!(filtered_points(&map, &none).is_empty());
        let observed: Vec<bool> = (0..9).map(|k| k != 4).collect();
        let res = FilterResult::from_labels(observed, Rational::zero());
        assert_eq!(filtered_points(&map, &res), map.defective_coords());
    }

    #[test]
    fn per_edge_costs_reach_the_solver() {
        let map = parse_wafer("11\n", GridFormat::Ascii).unwrap();
        let graph = build_graph(&map, Neighborhood::Rook);
        let weights = vec![Rational::from_integer(-1), Rational::from_integer(2)];
        // cheap edge: node 1 follows its own weight
        let res = solve_s_excess(&graph, &weights, &[Rational::new(1, 3)]).unwrap();
        assert_eq!(res.labels, vec![true, false]);
        // expensive edge: both take the cheaper uniform label
        let res = solve_s_excess(&graph, &weights, &[Rational::from_integer(5)]).unwrap();
        assert_eq!(res.labels, vec![false, false]);
    }

    #[test]
    fn invalid_configs() {
        assert!(AcConfig::new(Rational::from_integer(-1), Rational::from_integer(1), Neighborhood::King).is_err());
        assert!(AcConfig::new(half(), Rational::zero(), Neighborhood::King).is_err());
    }

    #[test]
    fn huge_uniform_cost_gives_uniform_labels() {
        let map = parse_wafer("1100\n1110\n0000\n", GridFormat::Ascii).unwrap();
        let n = map.in_mask_count() as i64;
        let res = ac_filter(&map, &king(Rational::from_integer(n))).unwrap();
        assert!(res.labels.iter().all(|&x| x == res.labels[0]));
        // 5 defective vs 7 functional: all-zero wins
        assert!(!res.labels[0]);
    }

    fn small_wafer() -> impl Strategy<Value = WaferMap> {
        (1usize..=4, 1usize..=4)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(0u8..3, r * c)))
            .prop_filter_map("needs an in-mask chip", |(r, c, raw)| {
                let cells = raw
                    .into_iter()
                    .map(|v| match v {
                        0 => CellState::OutsideMask,
                        1 => CellState::Functional,
                        _ => CellState::Defective,
                    })
                    .collect();
                WaferMap::new(r, c, cells).ok()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_exhaustive_minimum(map in small_wafer(), k in 0usize..4, rook in any::<bool>()) {
            let u = [Rational::new(1, 4), half(), Rational::from_integer(1), Rational::from_integer(2)][k];
            let nb = if rook { Neighborhood::Rook } else { Neighborhood::King };
            let cfg = AcConfig::new(u, Rational::from_integer(1), nb).unwrap();
            let res = ac_filter(&map, &cfg).unwrap();
            prop_assert_eq!(res.objective_value, brute_minimum(&map, &cfg));
            prop_assert_eq!(res.objective_value, ac_objective(&map, &cfg, &res.labels).unwrap());
            prop_assert_eq!(&res, &ac_filter(&map, &cfg).unwrap());
        }
    }
}
