//! RRT* over a learned outage map.
//!
//! Vertices are admitted only where the map's predicted outage is at most
//! `P0`, and every edge is at most one steering radius (`delta * v_max`)
//! long, so any root-to-vertex walk is a waypoint sequence that satisfies
//! both the connectivity and the speed constraint at its waypoints. The
//! near-set radius is the fixed steering radius rather than the shrinking
//! radius of textbook RRT*.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Airspace;
use crate::neuralnet::RadioModel;
use crate::{dist2d, Bounds, Error, Result};

/// Anything that can report a predicted outage probability at a ground
/// point. `None` means the point is outside the modeled area.
pub trait OutageMap: Sync {
    fn outage(&self, q: [f64; 2]) -> Option<f64>;
}

impl OutageMap for RadioModel {
    fn outage(&self, q: [f64; 2]) -> Option<f64> {
        self.outage_at(q)
    }
}

impl<F> OutageMap for F
where
    F: Fn([f64; 2]) -> Option<f64> + Sync,
{
    fn outage(&self, q: [f64; 2]) -> Option<f64> {
        self(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Seconds between waypoints (delta).
    pub delta: f64,
    /// m/s
    pub v_max: f64,
    /// P0
    pub outage_threshold: f64,
    pub goal_bias: f64,
    /// Defaults to the steering radius.
    pub goal_tolerance: Option<f64>,
    pub bounds: Bounds,
}

impl PlannerConfig {
    pub fn new(bounds: Bounds, outage_threshold: f64) -> Self {
        PlannerConfig {
            max_iterations: 5000,
            delta: 5.0,
            v_max: 5.0,
            outage_threshold,
            goal_bias: 0.05,
            goal_tolerance: None,
            bounds,
        }
    }

    pub fn step_radius(&self) -> f64 {
        self.delta * self.v_max
    }

    pub fn goal_tolerance(&self) -> f64 {
        self.goal_tolerance.unwrap_or_else(|| self.step_radius())
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !(self.step_radius() > 0.0 && self.step_radius().is_finite()) {
            return Err(Error::Config("delta * v_max must be positive".into()));
        }
        if !(self.outage_threshold >= 0.0 && self.outage_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "outage threshold must lie in [0, 1], got {}",
                self.outage_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(Error::Config(format!(
                "goal_bias must lie in [0, 1), got {}",
                self.goal_bias
            )));
        }
        let tol = self.goal_tolerance();
        if !(tol >= 0.0 && tol <= self.step_radius()) {
            return Err(Error::Config(format!(
                "goal_tolerance {tol} must lie in [0, step radius]"
            )));
        }
        Ok(())
    }
}

/// Search tree rooted at vertex 0. Each vertex caches the map outage it was
/// admitted with.
#[derive(Debug, Clone, Default)]
pub struct Tree {
    vertices: Vec<[f64; 2]>,
    parent: Vec<Option<usize>>,
    cost: Vec<f64>,
    outage: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    pub fn new(root: [f64; 2], root_outage: f64) -> Self {
        Tree {
            vertices: vec![root],
            parent: vec![None],
            cost: vec![0.0],
            outage: vec![root_outage],
            children: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.cost[i]
    }

    pub fn outage(&self, i: usize) -> f64 {
        self.outage[i]
    }

    /// Append `q` under `parent`; its cost is the parent's plus the edge.
    pub fn insert(&mut self, q: [f64; 2], parent: usize, outage: f64) -> usize {
        let idx = self.vertices.len();
        let c = self.cost[parent] + dist2d(self.vertices[parent], q);
        self.vertices.push(q);
        self.parent.push(Some(parent));
        self.cost.push(c);
        self.outage.push(outage);
        self.children.push(Vec::new());
        self.children[parent].push(idx);
        idx
    }

    /// Move `v` under `new_parent` and refresh the cost of its whole subtree.
    pub fn reparent(&mut self, v: usize, new_parent: usize) {
        if let Some(old) = self.parent[v] {
            self.children[old].retain(|&c| c != v);
        }
        self.parent[v] = Some(new_parent);
        self.children[new_parent].push(v);
        self.cost[v] = self.cost[new_parent] + dist2d(self.vertices[new_parent], self.vertices[v]);
        let mut queue: VecDeque<usize> = self.children[v].iter().copied().collect();
        while let Some(c) = queue.pop_front() {
            let p = self.parent[c].expect("non-root vertex has a parent");
            self.cost[c] = self.cost[p] + dist2d(self.vertices[p], self.vertices[c]);
            queue.extend(self.children[c].iter().copied());
        }
    }

    /// Root-to-`v` vertex sequence.
    pub fn path_to(&self, v: usize) -> Vec<[f64; 2]> {
        let mut out = vec![self.vertices[v]];
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            out.push(self.vertices[p]);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Recompute every cost from the root and check the structural
    /// invariants: parent links reach the root without cycles, stored costs
    /// match the recomputed ones within `rel_tol`, and no edge is longer
    /// than `step_radius`.
    pub fn check_invariants(&self, step_radius: f64, rel_tol: f64) -> std::result::Result<(), String> {
        let n = self.len();
        if n == 0 {
            return Ok(());
        }
        if self.parent[0].is_some() || self.cost[0] != 0.0 {
            return Err("root must have no parent and zero cost".into());
        }
        for v in 1..n {
            let mut cur = v;
            let mut recomputed = 0.0;
            let mut hops = 0;
            while let Some(p) = self.parent[cur] {
                let edge = dist2d(self.vertices[p], self.vertices[cur]);
                if edge > step_radius {
                    return Err(format!("edge {p}->{cur} has length {edge} > {step_radius}"));
                }
                if !self.children[p].contains(&cur) {
                    return Err(format!("child list of {p} is missing {cur}"));
                }
                recomputed += edge;
                cur = p;
                hops += 1;
                if hops > n {
                    return Err(format!("cycle through vertex {v}"));
                }
            }
            if cur != 0 {
                return Err(format!("vertex {v} is not connected to the root"));
            }
            let stored = self.cost[v];
            if (stored - recomputed).abs() > rel_tol * recomputed.max(1.0) {
                return Err(format!("vertex {v}: stored cost {stored} vs recomputed {recomputed}"));
            }
        }
        Ok(())
    }
}

pub fn sample_point<R: Rng + ?Sized>(bounds: &Bounds, goal: [f64; 2], goal_bias: f64, rng: &mut R) -> [f64; 2] {
    if rng.random::<f64>() < goal_bias {
        return goal;
    }
    [
        bounds.x_min + rng.random::<f64>() * bounds.width(),
        bounds.y_min + rng.random::<f64>() * bounds.height(),
    ]
}

/// Index of the vertex closest to `q`; ties go to the lowest index.
pub fn nearest(tree: &Tree, q: [f64; 2]) -> Result<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (i, v) in tree.vertices.iter().enumerate() {
        let d = (v[0] - q[0]).powi(2) + (v[1] - q[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty tree".into()))
}

/// The point within `step_radius` of `from` closest to `to`.
pub fn steer(from: [f64; 2], to: [f64; 2], step_radius: f64) -> [f64; 2] {
    let d = dist2d(from, to);
    if d <= step_radius {
        return to;
    }
    let mut t = step_radius / d;
    loop {
        let q = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
        // rounding can leave the step an ulp long; spacing checks are exact
        if dist2d(from, q) <= step_radius {
            return q;
        }
        t *= 1.0 - 4.0 * f64::EPSILON;
    }
}

/// True iff `q` is inside the map and its predicted outage is at most `p0`.
pub fn is_connected<M: OutageMap + ?Sized>(model: &M, q: [f64; 2], p0: f64) -> bool {
    model.outage(q).is_some_and(|p| p <= p0)
}

/// All vertices within the closed ball of radius `radius` around `q`.
pub fn near_set(tree: &Tree, q: [f64; 2], radius: f64) -> Vec<usize> {
    tree.vertices
        .iter()
        .enumerate()
        .filter(|(_, v)| dist2d(**v, q) <= radius)
        .map(|(i, _)| i)
        .collect()
}

/// Cheapest admissible parent for `q_new` among `q_nearest` and the near set.
/// Near vertices must be connected under `p0` and lie within `step_radius`.
pub fn choose_parent(
    tree: &Tree,
    near: &[usize],
    nearest_idx: usize,
    q_new: [f64; 2],
    p0: f64,
    step_radius: f64,
) -> (usize, f64) {
    let mut best = nearest_idx;
    let mut c_min = tree.cost[nearest_idx] + dist2d(tree.vertices[nearest_idx], q_new);
    for &i in near {
        if tree.outage[i] > p0 {
            continue;
        }
        let d = dist2d(tree.vertices[i], q_new);
        if d > step_radius {
            continue;
        }
        let c = tree.cost[i] + d;
        if c < c_min {
            best = i;
            c_min = c;
        }
    }
    (best, c_min)
}

/// Reparent every admissible near vertex that becomes cheaper through
/// `new_idx`. Returns how many vertices were rewired.
pub fn rewire(tree: &mut Tree, near: &[usize], new_idx: usize, p0: f64, step_radius: f64) -> usize {
    let q_new = tree.vertices[new_idx];
    let mut changed = 0;
    for &i in near {
        if i == new_idx || tree.outage[i] > p0 {
            continue;
        }
        let d = dist2d(tree.vertices[i], q_new);
        if d > step_radius {
            continue;
        }
        if tree.cost[new_idx] + d < tree.cost[i] {
            tree.reparent(i, new_idx);
            changed += 1;
        }
    }
    changed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<[f64; 2]>,
    /// meters
    pub length: f64,
    /// seconds at `v_max`
    pub flight_time: f64,
}

impl Path {
    pub fn from_waypoints(waypoints: Vec<[f64; 2]>, v_max: f64) -> Self {
        let length = waypoints.windows(2).map(|w| dist2d(w[0], w[1])).sum();
        Path {
            waypoints,
            length,
            flight_time: length / v_max,
        }
    }

    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.waypoints.len());
        out.push(0.0);
        for w in self.waypoints.windows(2) {
            acc += dist2d(w[0], w[1]);
            out.push(acc);
        }
        out
    }

    pub fn max_step(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| dist2d(w[0], w[1]))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Infeasible {
    StartBlocked,
    GoalBlocked,
    /// No vertex reached the goal region within the iteration budget.
    GoalNotReached { tree_size: usize },
}

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasible::StartBlocked => write!(f, "start point violates the outage constraint"),
            Infeasible::GoalBlocked => write!(f, "goal point violates the outage constraint"),
            Infeasible::GoalNotReached { tree_size } => {
                write!(f, "goal not reached ({tree_size} vertices explored)")
            }
        }
    }
}

/// Incremental RRT* search. [`plan`] drives it to completion; tests and
/// tools can also step it one extension at a time.
pub struct RrtStar<'m, M: OutageMap + ?Sized> {
    config: PlannerConfig,
    model: &'m M,
    goal: [f64; 2],
    tree: Tree,
    goal_candidates: Vec<usize>,
    iterations: usize,
}

impl<'m, M: OutageMap + ?Sized> RrtStar<'m, M> {
    pub fn new(
        config: PlannerConfig,
        model: &'m M,
        start: [f64; 2],
        goal: [f64; 2],
    ) -> Result<std::result::Result<Self, Infeasible>> {
        config.validate()?;
        let p0 = config.outage_threshold;
        let Some(root_outage) = model.outage(start).filter(|&p| p <= p0) else {
            return Ok(Err(Infeasible::StartBlocked));
        };
        if !is_connected(model, goal, p0) {
            return Ok(Err(Infeasible::GoalBlocked));
        }
        let tree = Tree::new(start, root_outage);
        let mut search = RrtStar {
            config,
            model,
            goal,
            tree,
            goal_candidates: Vec::new(),
            iterations: 0,
        };
        if dist2d(start, goal) <= search.config.goal_tolerance() {
            search.goal_candidates.push(0);
        }
        Ok(Ok(search))
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// One sample-steer-gate-insert-rewire iteration. Returns the index of
    /// the new vertex, or `None` if the steered point was rejected.
    pub fn extend<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        self.iterations += 1;
        let cfg = &self.config;
        let r = cfg.step_radius();
        let p0 = cfg.outage_threshold;
        let q_rand = sample_point(&cfg.bounds, self.goal, cfg.goal_bias, rng);
        let nearest_idx = nearest(&self.tree, q_rand).expect("tree has a root");
        let q_new = steer(self.tree.vertices[nearest_idx], q_rand, r);
        if q_new == self.tree.vertices[nearest_idx] {
            return None;
        }
        let p_new = self.model.outage(q_new).filter(|&p| p <= p0)?;
        let near = near_set(&self.tree, q_new, r);
        let (parent, _) = choose_parent(&self.tree, &near, nearest_idx, q_new, p0, r);
        let idx = self.tree.insert(q_new, parent, p_new);
        rewire(&mut self.tree, &near, idx, p0, r);
        if dist2d(q_new, self.goal) <= cfg.goal_tolerance() {
            self.goal_candidates.push(idx);
        }
        Some(idx)
    }

    /// Cheapest vertex that connects to the goal, with the total cost.
    pub fn best_goal(&self) -> Option<(usize, f64)> {
        self.goal_candidates
            .iter()
            .map(|&i| (i, self.tree.cost[i] + dist2d(self.tree.vertices[i], self.goal)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn best_path(&self) -> Option<Path> {
        let (v, _) = self.best_goal()?;
        let mut wps = self.tree.path_to(v);
        if *wps.last().unwrap() != self.goal {
            wps.push(self.goal);
        }
        Some(Path::from_waypoints(wps, self.config.v_max))
    }
}

/// Plan a minimum-length path from `start` to `goal` whose waypoints all
/// satisfy the outage constraint.
pub fn plan<M: OutageMap + ?Sized>(
    config: &PlannerConfig,
    model: &M,
    start: [f64; 2],
    goal: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Result<std::result::Result<Path, Infeasible>> {
    let mut search = match RrtStar::new(*config, model, start, goal)? {
        Ok(s) => s,
        Err(e) => return Ok(Err(e)),
    };
    if start == goal {
        return Ok(Ok(Path::from_waypoints(vec![start], config.v_max)));
    }
    for _ in 0..config.max_iterations {
        search.extend(rng);
    }
    Ok(search.best_path().ok_or(Infeasible::GoalNotReached {
        tree_size: search.tree.len(),
    }))
}

/// Result of checking a waypoint path against the discrete constraints and
/// against Monte-Carlo ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Model outage per waypoint (`NaN` outside the map).
    pub model_outage: Vec<f64>,
    /// Monte-Carlo outage per waypoint.
    pub true_outage: Vec<f64>,
    pub max_step: f64,
    /// Model outage at most P0 at every waypoint.
    pub connectivity_ok: bool,
    /// Every step at most `delta * v_max`.
    pub spacing_ok: bool,
    /// First and last waypoints equal the requested endpoints.
    pub endpoints_ok: bool,
    /// Waypoints whose Monte-Carlo outage exceeds P0.
    pub true_violations: Vec<usize>,
    /// Longest `t - tau(t)` over waypoint times, using Monte-Carlo status.
    pub max_disconnection_s: f64,
    /// `max_disconnection_s <= delta`.
    pub ground_truth_ok: bool,
}

impl ValidationReport {
    pub fn verdict(&self) -> bool {
        self.connectivity_ok && self.spacing_ok && self.endpoints_ok
    }
}

/// Check a path against the model constraints and Monte-Carlo ground truth.
/// When `endpoints` is `None` only non-emptiness is checked for them.
pub fn validate_path<M: OutageMap + ?Sized, R: Rng + ?Sized>(
    path: &Path,
    endpoints: Option<([f64; 2], [f64; 2])>,
    model: &M,
    config: &PlannerConfig,
    airspace: &Airspace,
    n_mc: usize,
    rng: &mut R,
) -> Result<ValidationReport> {
    if path.waypoints.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let p0 = config.outage_threshold;
    let model_outage: Vec<f64> = path
        .waypoints
        .iter()
        .map(|&q| model.outage(q).unwrap_or(f64::NAN))
        .collect();
    let connectivity_ok = model_outage.iter().all(|&p| p <= p0);
    let max_step = path.max_step();
    let spacing_ok = max_step <= config.step_radius();
    let endpoints_ok = match endpoints {
        Some((s, g)) => path.waypoints[0] == s && *path.waypoints.last().unwrap() == g,
        None => true,
    };

    let true_outage = path
        .waypoints
        .iter()
        .map(|&q| {
            if airspace.bounds.contains(q) {
                airspace.outage(q, n_mc, rng)
            } else {
                Ok(1.0)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let true_violations: Vec<usize> = true_outage
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > p0)
        .map(|(i, _)| i)
        .collect();

    let cum = path.cumulative_lengths();
    let mut last_connected_at = 0.0;
    let mut max_gap: f64 = 0.0;
    for (i, &p) in true_outage.iter().enumerate() {
        let t = cum[i] / config.v_max;
        if p <= p0 {
            last_connected_at = t;
        } else {
            max_gap = max_gap.max(t - last_connected_at);
        }
    }

    Ok(ValidationReport {
        model_outage,
        true_outage,
        max_step,
        connectivity_ok,
        spacing_ok,
        endpoints_ok,
        true_violations,
        max_disconnection_s: max_gap,
        ground_truth_ok: max_gap <= config.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn flat(p: f64) -> impl Fn([f64; 2]) -> Option<f64> + Sync {
        let b = Bounds::square(1000.0).unwrap();
        move |q| b.contains(q).then_some(p)
    }

    #[test]
    fn steer_examples() {
        assert_eq!(steer([0.0, 0.0], [10.0, 0.0], 25.0), [10.0, 0.0]);
        assert_eq!(steer([0.0, 0.0], [50.0, 0.0], 25.0), [25.0, 0.0]);
        assert_eq!(steer([3.0, 4.0], [3.0, 4.0], 25.0), [3.0, 4.0]);
        let s = steer([1.0, 1.0], [301.0, 401.0], 25.0);
        assert!((dist2d([1.0, 1.0], s) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn goal_bias_one_always_goal() {
        let b = Bounds::square(100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| sample_point(&b, [7.0, 8.0], 1.0, &mut rng) == [7.0, 8.0]));
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut c = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(sample_point(&b, [0.0; 2], 0.3, &mut a), sample_point(&b, [0.0; 2], 0.3, &mut c));
    }

    #[test]
    fn nearest_basics() {
        assert!(nearest(&Tree::default(), [0.0, 0.0]).is_err());
        let mut t = Tree::new([0.0, 0.0], 0.0);
        assert_eq!(nearest(&t, [100.0, 100.0]).unwrap(), 0);
        let a = t.insert([10.0, 0.0], 0, 0.0);
        t.insert([-10.0, 0.0], 0, 0.0);
        assert_eq!(nearest(&t, [10.0, 0.0]).unwrap(), a);
        // equidistant from root-side vertices 1 and 2: lowest index wins
        assert_eq!(nearest(&t, [0.0, 50.0]).unwrap(), 0);
        assert_eq!(nearest(&t, [0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn near_set_extremes() {
        let mut t = Tree::new([0.0, 0.0], 0.0);
        t.insert([3.0, 4.0], 0, 0.0);
        t.insert([20.0, 0.0], 0, 0.0);
        assert_eq!(near_set(&t, [3.0, 4.0], 0.0), vec![1]);
        assert_eq!(near_set(&t, [0.0, 0.0], 5.0), vec![0, 1]);
        assert_eq!(near_set(&t, [0.0, 0.0], 1e6), vec![0, 1, 2]);
    }

    #[test]
    fn choose_parent_prefers_cheaper_near_vertex() {
        // root (0,0) -> a (20,0) -> b (20,20) ; new point (10,20)
        let mut t = Tree::new([0.0, 0.0], 0.0);
        let a = t.insert([20.0, 0.0], 0, 0.0);
        let b = t.insert([20.0, 20.0], a, 0.0);
        let q = [10.0, 20.0];
        // nearest is b (distance 10, through-cost 50); root gives 22.36
        let (p, c) = choose_parent(&t, &[0, b], b, q, 0.5, 25.0);
        assert_eq!(p, 0);
        assert!((c - 500f64.sqrt()).abs() < 1e-12);
        assert_eq!(choose_parent(&t, &[], b, q, 0.5, 25.0).0, b);
        // an infeasible near vertex is never chosen
        t.outage[0] = 0.9;
        assert_eq!(choose_parent(&t, &[0, b], b, q, 0.5, 25.0).0, b);
    }

    #[test]
    fn rewire_switches_parent_and_propagates() {
        // chain root -> a -> b -> c, then a shortcut vertex near b
        let mut t = Tree::new([0.0, 0.0], 0.0);
        let a = t.insert([0.0, 20.0], 0, 0.0);
        let b = t.insert([20.0, 20.0], a, 0.0);
        let c = t.insert([40.0, 20.0], b, 0.0);
        let n = t.insert([15.0, 5.0], 0, 0.0);
        assert_eq!(rewire(&mut t, &[a], n, 0.5, 25.0), 0);
        let before = t.cost(c);
        assert_eq!(rewire(&mut t, &[0, a, b], n, 0.5, 25.0), 1);
        assert_eq!(t.parent(b), Some(n));
        assert!(t.cost(c) < before);
        t.check_invariants(25.0, 1e-12).unwrap();
    }

    #[test]
    fn plan_trivial_cases() {
        let cfg = PlannerConfig::new(Bounds::square(1000.0).unwrap(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = plan(&cfg, &flat(0.1), [5.0, 5.0], [5.0, 5.0], &mut rng).unwrap().unwrap();
        assert_eq!(p.waypoints, vec![[5.0, 5.0]]);
        assert_eq!(p.length, 0.0);
        let blocked = plan(&cfg, &flat(0.7), [5.0, 5.0], [500.0, 5.0], &mut rng).unwrap();
        assert_eq!(blocked, Err(Infeasible::StartBlocked));
        let outside = plan(&cfg, &flat(0.1), [5.0, 5.0], [5000.0, 5.0], &mut rng).unwrap();
        assert_eq!(outside, Err(Infeasible::GoalBlocked));
    }

    #[test]
    fn plan_respects_a_wall() {
        // outage wall at x in [400, 600] except a gap near y > 800
        let b = Bounds::square(1000.0).unwrap();
        let model = move |q: [f64; 2]| {
            b.contains(q)
                .then(|| if (400.0..=600.0).contains(&q[0]) && q[1] < 800.0 { 0.9 } else { 0.1 })
        };
        let mut cfg = PlannerConfig::new(b, 0.3);
        cfg.max_iterations = 8000;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let path = plan(&cfg, &model, [100.0, 100.0], [900.0, 100.0], &mut rng).unwrap().unwrap();
        assert!(path.waypoints.iter().all(|&q| is_connected(&model, q, 0.3)));
        assert!(path.max_step() <= cfg.step_radius());
        // shortest detour goes through the gap corners (400,800) and (600,800)
        let detour = 2.0 * 300f64.hypot(700.0) + 200.0;
        assert!(path.length >= detour - 1e-9, "{}", path.length);
        assert_eq!(path.waypoints[0], [100.0, 100.0]);
        assert_eq!(*path.waypoints.last().unwrap(), [900.0, 100.0]);
    }

    #[test]
    fn config_validation() {
        let b = Bounds::square(10.0).unwrap();
        let mut c = PlannerConfig::new(b, 0.5);
        assert!(c.validate().is_ok());
        c.goal_bias = 1.0;
        assert!(c.validate().is_err());
        let mut c = PlannerConfig::new(b, 1.5);
        assert!(c.validate().is_err());
        c.outage_threshold = 0.5;
        c.goal_tolerance = Some(30.0);
        assert!(c.validate().is_err());
        c.goal_tolerance = None;
        c.v_max = 0.0;
        assert!(c.validate().is_err());
    }
}
