//! Linking track segments into a rooted path tree and enumerating the
//! ego-paths it encodes.
//!
//! Segments are consumed sub-region by sub-region from the bottom of the
//! image. The start node sits below the bottom centre of the image and the
//! bottom segment closest to it seeds the first edge. Each later segment
//! attaches to the open edge whose tip is horizontally nearest to the
//! segment's lowest point. One attachment extends the edge; two or more turn
//! the edge's tip into a switch node with one child edge per segment.
//! Segments that attach to nothing belong to routes the train cannot reach
//! and are dropped. Every edge left open at the end receives an end node.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterConfig, TrackSegment, REFERENCE_WIDTH};
use crate::error::{Error, Result};
use crate::geometry::{GridDims, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    Switch,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    pub kind: NodeKind,
    /// `[x, y]` in pixels.
    pub anchor: [f64; 2],
    /// End node of an edge that lost a segment to a nearer edge, which is
    /// what two converging rails look like from below.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub merge_suspected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEdge {
    pub parent: usize,
    pub child: usize,
    /// Bottom-up, strictly decreasing `y`.
    pub trajectory: Vec<Triplet>,
}

/// Rooted tree of start, switch and end nodes. Node 0 is the start node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTree {
    pub nodes: Vec<PathNode>,
    pub edges: Vec<PathEdge>,
}

impl PathTree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Edge ids leaving `node`, in creation order.
    pub fn child_edges(&self, node: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.edges[e].parent == node)
            .collect()
    }

    /// Checks the structural invariants: a single start root, every other
    /// node entered by exactly one edge, no cycles, end nodes as the only
    /// leaves, switches with at least two children, and monotone non-empty
    /// trajectories.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("path tree: {msg}")));
        if self.nodes.first().map(|n| n.kind) != Some(NodeKind::Start) {
            return bad("node 0 must be the start node".into());
        }
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut outdegree = vec![0usize; self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if e.parent >= self.nodes.len() || e.child >= self.nodes.len() {
                return bad(format!("edge {i} references a missing node"));
            }
            indegree[e.child] += 1;
            outdegree[e.parent] += 1;
            if e.trajectory.is_empty() {
                return bad(format!("edge {i} has an empty trajectory"));
            }
            if e.trajectory.windows(2).any(|w| w[1].y >= w[0].y) {
                return bad(format!("edge {i} trajectory is not strictly bottom-up"));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let expected_in = usize::from(i != 0);
            if indegree[i] != expected_in {
                return bad(format!("node {i} has {} incoming edges", indegree[i]));
            }
            match n.kind {
                NodeKind::Start if i != 0 => return bad(format!("extra start node {i}")),
                NodeKind::Start if outdegree[i] != 1 => {
                    return bad("start node must have exactly one edge".into())
                }
                NodeKind::Switch if outdegree[i] < 2 => {
                    return bad(format!("switch node {i} has fewer than two children"))
                }
                NodeKind::End if outdegree[i] != 0 => return bad(format!("end node {i} is not a leaf")),
                _ => {}
            }
        }
        // With a single root and in-degree one everywhere else, reaching every
        // node from the root rules out cycles.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                return bad("cycle detected".into());
            }
            stack.extend(self.child_edges(n).into_iter().map(|e| self.edges[e].child));
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Largest horizontal distance between an edge tip and the lowest point
    /// of a segment that attaches to it.
    pub tau_seg: f64,
    /// Largest horizontal distance between the bottom centre of the image
    /// and the lowest point of the seeding segment.
    pub tau_start: f64,
    /// Rows an attachment may skip between edge tip and segment.
    pub max_row_gap: usize,
    /// Segments shorter than this never attach.
    pub min_segment_triplets: usize,
    /// Largest relative change of the rail-area width between an edge tip
    /// and the lowest point of a segment that attaches to it.
    pub max_width_change: f64,
    /// Dead-end switch branches with fewer triplets are pruned.
    pub min_spur_rows: usize,
    pub filter_min_rows: usize,
    /// Fraction of the image height a kept path must span.
    pub filter_min_extent: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self::for_dims(GridDims {
            width: 960,
            height: 540,
        })
    }
}

impl TreeConfig {
    pub fn for_dims(dims: GridDims) -> Self {
        let s = dims.width as f64 / REFERENCE_WIDTH;
        Self {
            tau_seg: (12.0 * s).max(3.0),
            tau_start: 0.25 * dims.width as f64,
            max_row_gap: ((20.0 * s).round() as usize).max(2),
            min_segment_triplets: 3.min(ClusterConfig::for_dims(dims).h),
            max_width_change: 0.5,
            min_spur_rows: ((30.0 * s).round() as usize).max(3),
            filter_min_rows: 3,
            filter_min_extent: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_seg > 0.0 && self.tau_start > 0.0) {
            return Err(Error::InvalidConfig("tau_seg and tau_start must be > 0".into()));
        }
        if !(self.max_width_change >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max_width_change must be >= 0, got {}",
                self.max_width_change
            )));
        }
        if self.min_segment_triplets == 0 || self.filter_min_rows == 0 {
            return Err(Error::InvalidConfig(
                "min_segment_triplets and filter_min_rows must be >= 1".into(),
            ));
        }
        if !(self.filter_min_extent > 0.0 && self.filter_min_extent <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "filter_min_extent must lie in (0, 1], got {}",
                self.filter_min_extent
            )));
        }
        Ok(())
    }
}

struct OpenEdge {
    parent: usize,
    child: Option<usize>,
    trajectory: Vec<Triplet>,
    contested: bool,
}

impl OpenEdge {
    fn tip(&self) -> &Triplet {
        self.trajectory.last().expect("edges are never empty")
    }
}

/// Builds the path tree from per-sub-region segments (bottom-most first).
pub fn build_path_tree(segments: &[Vec<TrackSegment>], cfg: &TreeConfig, dims: GridDims) -> Result<PathTree> {
    cfg.validate()?;
    let center = dims.width as f64 / 2.0;
    let bottom = dims.height - 1;
    // Segments in a short top band can only be as long as the band.
    let usable = |s: &&TrackSegment| s.len() >= cfg.min_segment_triplets.min(s.bottom().y + 1);

    // Seed: the first band, within the row-gap tolerance of the image bottom,
    // holding a segment close enough to the bottom centre.
    let mut seed: Option<(usize, &TrackSegment)> = None;
    for (bi, band) in segments.iter().enumerate() {
        let best = band
            .iter()
            .filter(usable)
            .filter(|s| bottom - s.bottom().y <= cfg.max_row_gap)
            .map(|s| ((s.bottom().x_center - center).abs(), s))
            .filter(|(d, _)| *d <= cfg.tau_start)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, s)) = best {
            seed = Some((bi, s));
            break;
        }
    }
    let Some((seed_band, seed_seg)) = seed else {
        return Err(Error::NoStartPath {
            tau_start: cfg.tau_start,
        });
    };

    let mut nodes = vec![PathNode {
        kind: NodeKind::Start,
        anchor: [center, dims.height as f64],
        merge_suspected: false,
    }];
    let mut edges = vec![OpenEdge {
        parent: 0,
        child: None,
        trajectory: seed_seg.triplets.clone(),
        contested: false,
    }];
    let mut switches = Vec::new();

    for band in &segments[seed_band + 1..] {
        let mut candidates: Vec<&TrackSegment> = band.iter().filter(usable).collect();
        candidates.sort_by(|a, b| {
            b.bottom()
                .y
                .cmp(&a.bottom().y)
                .then(a.bottom().x_center.total_cmp(&b.bottom().x_center))
        });

        let mut groups: BTreeMap<usize, Vec<&TrackSegment>> = BTreeMap::new();
        for seg in candidates {
            let b = seg.bottom();
            let reachable: Vec<(usize, f64)> = edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.child.is_none())
                .filter_map(|(i, e)| {
                    let tip = e.tip();
                    let d = (tip.x_center - b.x_center).abs();
                    let width_ok =
                        (b.width() - tip.width()).abs() <= cfg.max_width_change * tip.width().max(1.0);
                    (tip.y > b.y && tip.y - b.y <= cfg.max_row_gap + 1 && d <= cfg.tau_seg && width_ok)
                        .then_some((i, d))
                })
                .collect();
            let Some(&(chosen, _)) = reachable
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            else {
                continue;
            };
            for &(other, _) in &reachable {
                if other != chosen {
                    edges[other].contested = true;
                }
            }
            groups.entry(chosen).or_default().push(seg);
        }

        for (edge_id, segs) in groups {
            if let [seg] = segs.as_slice() {
                let e = &mut edges[edge_id];
                e.trajectory.extend_from_slice(&seg.triplets);
                e.contested = false;
                continue;
            }
            let tip = *edges[edge_id].tip();
            let node = nodes.len();
            nodes.push(PathNode {
                kind: NodeKind::Switch,
                anchor: [tip.x_center, tip.y as f64],
                merge_suspected: false,
            });
            edges[edge_id].child = Some(node);
            let mut children = Vec::with_capacity(segs.len());
            for seg in segs {
                children.push(edges.len());
                edges.push(OpenEdge {
                    parent: node,
                    child: None,
                    trajectory: seg.triplets.clone(),
                    contested: false,
                });
            }
            switches.push((node, edge_id, children));
        }
    }

    for (node, parent, children) in &switches {
        localize_switch(&mut nodes[*node], *parent, children, &mut edges);
    }

    for e in &mut edges {
        if e.child.is_none() {
            let tip = *e.tip();
            e.child = Some(nodes.len());
            nodes.push(PathNode {
                kind: NodeKind::End,
                anchor: [tip.x_center, tip.y as f64],
                merge_suspected: e.contested,
            });
        }
    }

    let tree = PathTree {
        nodes,
        edges: edges
            .into_iter()
            .map(|e| PathEdge {
                parent: e.parent,
                child: e.child.expect("all edges closed"),
                trajectory: e.trajectory,
            })
            .collect(),
    };
    Ok(prune_spurs(tree, cfg.min_spur_rows))
}

/// Removes short dead-end branches at switches and merges switches left
/// with a single child into one edge.
///
/// A switch child that ends after fewer than `min_rows` triplets is almost
/// always the same rail seen twice in one sub-region. When every child of a
/// switch is that short, the longest one stays.
pub fn prune_spurs(tree: PathTree, min_rows: usize) -> PathTree {
    let PathTree { nodes, edges } = tree;
    let mut edges: Vec<Option<PathEdge>> = edges.into_iter().map(Some).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        children[e.as_ref().unwrap().parent].push(i);
    }

    for n in 0..nodes.len() {
        if nodes[n].kind != NodeKind::Switch {
            continue;
        }
        let is_spur = |e: &PathEdge| nodes[e.child].kind == NodeKind::End && e.trajectory.len() < min_rows;
        let spurs: Vec<usize> = children[n]
            .iter()
            .copied()
            .filter(|&c| is_spur(edges[c].as_ref().unwrap()))
            .collect();
        let mut remove = spurs.clone();
        if spurs.len() == children[n].len() {
            // Keep the longest; the earliest on ties.
            let keep = *spurs
                .iter()
                .max_by(|&&a, &&b| {
                    let la = edges[a].as_ref().unwrap().trajectory.len();
                    let lb = edges[b].as_ref().unwrap().trajectory.len();
                    la.cmp(&lb).then(b.cmp(&a))
                })
                .expect("switches have children");
            remove.retain(|&c| c != keep);
        }
        for c in remove {
            edges[c] = None;
        }
        children[n].retain(|&c| edges[c].is_some());
    }

    // Merge single-child switches into their incoming edge, top-down so
    // chains of them collapse into one edge.
    let mut incoming: Vec<Option<usize>> = vec![None; nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        if let Some(e) = e {
            incoming[e.child] = Some(i);
        }
    }
    let mut order: Vec<usize> = Vec::new();
    let mut stack = vec![0usize];
    while let Some(n) = stack.pop() {
        order.push(n);
        stack.extend(children[n].iter().map(|&c| edges[c].as_ref().unwrap().child));
    }
    for &n in order.iter().rev() {
        if nodes[n].kind != NodeKind::Switch || children[n].len() != 1 {
            continue;
        }
        let up = incoming[n].expect("switch has an incoming edge");
        let down = edges[children[n][0]].take().unwrap();
        let e = edges[up].as_mut().unwrap();
        e.trajectory.extend(down.trajectory);
        e.child = down.child;
        incoming[down.child] = Some(up);
        children[n].clear();
    }

    // Renumber what is still reachable, keeping the original orders.
    let mut reachable = vec![false; nodes.len()];
    reachable[0] = true;
    let mut stack = vec![0usize];
    while let Some(n) = stack.pop() {
        for e in edges.iter().flatten().filter(|e| e.parent == n) {
            if !reachable[e.child] {
                reachable[e.child] = true;
                stack.push(e.child);
            }
        }
    }
    let mut new_id = vec![usize::MAX; nodes.len()];
    let mut kept_nodes = Vec::new();
    for (i, node) in nodes.into_iter().enumerate() {
        if reachable[i] {
            new_id[i] = kept_nodes.len();
            kept_nodes.push(node);
        }
    }
    let kept_edges = edges
        .into_iter()
        .flatten()
        .filter(|e| reachable[e.parent])
        .map(|e| PathEdge {
            parent: new_id[e.parent],
            child: new_id[e.child],
            trajectory: e.trajectory,
        })
        .collect();
    PathTree {
        nodes: kept_nodes,
        edges: kept_edges,
    }
}

/// A branch that leaves its sibling part-way through a sub-region makes the
/// sibling's lower rows part of both routes. Those rows move from the
/// sibling to the parent edge and the switch moves up with them.
fn localize_switch(node: &mut PathNode, parent: usize, children: &[usize], edges: &mut [OpenEdge]) {
    let mut starts: Vec<(usize, usize)> = children.iter().map(|&c| (edges[c].trajectory[0].y, c)).collect();
    starts.sort_by(|a, b| b.0.cmp(&a.0));
    let (lowest_y, lowest) = starts[0];
    let next_y = starts[1].0;
    if lowest_y == next_y {
        return;
    }
    let shared = edges[lowest]
        .trajectory
        .iter()
        .take_while(|t| t.y > next_y)
        .count();
    if shared == 0 || shared == edges[lowest].trajectory.len() {
        return;
    }
    let moved: Vec<Triplet> = edges[lowest].trajectory.drain(..shared).collect();
    edges[parent].trajectory.extend(moved);
    let tip = *edges[parent].tip();
    node.anchor = [tip.x_center, tip.y as f64];
}

/// One possible route of the train: triplets from the image bottom upward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoPath {
    pub triplets: Vec<Triplet>,
    /// Edge ids from the start node to the end node.
    pub edges: Vec<usize>,
}

impl EgoPath {
    pub fn from_triplets(triplets: Vec<Triplet>) -> Self {
        Self {
            triplets,
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Number of rows between the lowest and highest triplet, inclusive.
    pub fn vertical_extent(&self) -> usize {
        match (self.triplets.first(), self.triplets.last()) {
            (Some(a), Some(b)) => a.y.abs_diff(b.y) + 1,
            _ => 0,
        }
    }
}

/// One path per end node, following edges from the root (depth first, in
/// edge creation order).
pub fn enumerate_ego_paths(tree: &PathTree) -> Vec<EgoPath> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for (i, e) in tree.edges.iter().enumerate() {
        children[e.parent].push(i);
    }
    let mut paths = Vec::new();
    let mut route: Vec<usize> = Vec::new();
    // (edge, depth) pairs; depth trims `route` when backtracking.
    let mut stack: Vec<(usize, usize)> = children[tree.root()].iter().rev().map(|&e| (e, 0)).collect();
    while let Some((edge, depth)) = stack.pop() {
        route.truncate(depth);
        route.push(edge);
        let child = tree.edges[edge].child;
        if tree.nodes[child].kind == NodeKind::End {
            let triplets = route
                .iter()
                .flat_map(|&e| tree.edges[e].trajectory.iter().copied())
                .collect();
            paths.push(EgoPath {
                triplets,
                edges: route.clone(),
            });
        }
        stack.extend(children[child].iter().rev().map(|&e| (e, depth + 1)));
    }
    paths
}

/// Drops paths with too few triplets or too small a vertical extent.
pub fn filter_paths(paths: Vec<EgoPath>, cfg: &TreeConfig, dims: GridDims) -> Vec<EgoPath> {
    let min_extent = cfg.filter_min_extent * dims.height as f64;
    paths
        .into_iter()
        .filter(|p| p.len() >= cfg.filter_min_rows && p.vertical_extent() as f64 >= min_extent)
        .collect()
}
