use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replay_path, BaselinePath};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::model_io::{MlpModel, Scenario, StepModel};
use crate::search::uniform_point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrmConfig {
    pub nodes: usize,
    /// Connection threshold `delta` on the predicted-state error.
    pub threshold: f64,
    pub state_space: BoxDomain,
    pub effector_space: BoxDomain,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Roadmap {
    pub states: Vec<Vec<f64>>,
    pub effectors: Vec<Vec<f64>>,
    /// `edges[i]` lists every `j` reachable from `i` in one step.
    pub edges: Vec<Vec<usize>>,
    pub threshold: f64,
}

impl Roadmap {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

/// `i -> j` connects when moving the effector from `p_i` to `p_j` takes
/// `x_i` to within `delta` of `x_j`. Exact matches always connect, so
/// `delta = 0` keeps only them.
fn connects(x_new: &[f64], x_j: &[f64], delta: f64) -> bool {
    let d = distance(x_new, x_j);
    d < delta || d == 0.0
}

fn out_edges(
    step: &StepModel<'_>,
    x: &[f64],
    p: &[f64],
    states: &[Vec<f64>],
    effectors: &[Vec<f64>],
    skip: Option<usize>,
    delta: f64,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (j, (xj, pj)) in states.iter().zip(effectors).enumerate() {
        if Some(j) == skip {
            continue;
        }
        let u: Vec<f64> = pj.iter().zip(p).map(|(a, b)| a - b).collect();
        if connects(&step.step(x, p, &u)?, xj, delta) {
            out.push(j);
        }
    }
    Ok(out)
}

/// Samples `nodes` (state, effector) pairs and connects every ordered pair
/// whose one-step prediction lands within the threshold.
pub fn prm_build(model: &MlpModel, scenario: &Scenario, config: &PrmConfig) -> Result<Roadmap> {
    if config.state_space.dim() != scenario.state_dim()
        || config.effector_space.dim() != scenario.action_dim()
    {
        return Err(Error::ShapeMismatch("roadmap spaces do not match the scenario".into()));
    }
    if !(config.threshold >= 0.0 && config.threshold.is_finite()) {
        return Err(Error::InvalidConfig("connection threshold must be >= 0".into()));
    }
    let step = StepModel::new(model, scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut states = Vec::with_capacity(config.nodes);
    let mut effectors = Vec::with_capacity(config.nodes);
    for _ in 0..config.nodes {
        states.push(uniform_point(&mut rng, &config.state_space));
        effectors.push(uniform_point(&mut rng, &config.effector_space));
    }
    let edges = (0..config.nodes)
        .into_par_iter()
        .map(|i| out_edges(&step, &states[i], &effectors[i], &states, &effectors, Some(i), config.threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(Roadmap { states, effectors, edges, threshold: config.threshold })
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path on a weighted digraph; `h` must be consistent. Returns the
/// node sequence and its cost.
pub fn astar(
    adj: &[Vec<(usize, f64)>],
    start: usize,
    goal: usize,
    h: impl Fn(usize) -> f64,
) -> Option<(Vec<usize>, f64)> {
    let n = adj.len();
    let mut g = vec![f64::INFINITY; n];
    let mut came = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[start] = 0.0;
    open.push(Open { f: h(start), node: start });
    while let Some(Open { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == goal {
            let mut path = vec![goal];
            while *path.last().unwrap() != start {
                path.push(came[*path.last().unwrap()]);
            }
            path.reverse();
            return Some((path, g[goal]));
        }
        closed[node] = true;
        for &(next, w) in &adj[node] {
            let cand = g[node] + w;
            if cand < g[next] {
                g[next] = cand;
                came[next] = node;
                open.push(Open { f: cand + h(next), node: next });
            }
        }
    }
    None
}

/// Plans from the scenario's initial pair to the reachable node nearest the
/// goal. The initial pair is connected into the roadmap, colliding nodes are
/// removed and A* runs with Euclidean state distance as both edge weight and
/// heuristic. The path is replayed through the model; when a replayed state
/// collides, the offending edge is dropped and the search repeats.
pub fn prm_plan(roadmap: &Roadmap, model: &MlpModel, scenario: &Scenario) -> Result<BaselinePath> {
    scenario.validate()?;
    let step = StepModel::new(model, scenario)?;
    let n = roadmap.len();
    let init = n;
    let (x0, p0) = (&scenario.initial_state, &scenario.initial_effector);
    let goal = &scenario.target_state;
    let threshold = scenario.goal_threshold.unwrap_or(roadmap.threshold);
    let init_edges =
        out_edges(&step, x0, p0, &roadmap.states, &roadmap.effectors, None, roadmap.threshold)?;

    let mut states = roadmap.states.clone();
    states.push(x0.clone());
    let mut effectors = roadmap.effectors.clone();
    effectors.push(p0.clone());
    let free: Vec<bool> = (0..=n)
        .map(|i| i == init || !scenario.collides(&states[i], &effectors[i]))
        .collect();
    let mut blocked: BTreeSet<(usize, usize)> = BTreeSet::new();

    loop {
        let adj: Vec<Vec<(usize, f64)>> = (0..=n)
            .map(|i| {
                let out = if i == init { &init_edges } else { &roadmap.edges[i] };
                if !free[i] {
                    return Vec::new();
                }
                out.iter()
                    .filter(|&&j| free[j] && !blocked.contains(&(i, j)))
                    .map(|&j| (j, distance(&states[i], &states[j])))
                    .collect()
            })
            .collect();

        let reach = reachable(&adj, init);
        let target = reach
            .iter()
            .copied()
            .min_by(|&a, &b| {
                distance(&states[a], goal).total_cmp(&distance(&states[b], goal)).then(a.cmp(&b))
            })
            .unwrap_or(init);
        if target == init {
            return replay_path(&step, scenario, Vec::new(), false, threshold, n);
        }
        let (path, _) = astar(&adj, init, target, |v| distance(&states[v], &states[target]))
            .expect("target is reachable");
        let actions: Vec<Vec<f64>> = path
            .windows(2)
            .map(|w| effectors[w[1]].iter().zip(&effectors[w[0]]).map(|(a, b)| a - b).collect())
            .collect();
        let replay = replay_path(&step, scenario, actions, true, threshold, n)?;
        let hit = (1..replay.states.len())
            .find(|&k| scenario.collides(&replay.states[k], &replay.effectors[k]));
        match hit {
            None => return Ok(replay),
            Some(k) => {
                blocked.insert((path[k - 1], path[k]));
            }
        }
    }
}

fn reachable(adj: &[Vec<(usize, f64)>], start: usize) -> Vec<usize> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        out.push(v);
        for &(w, _) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{CostForm, FeatureMode, Obstacle};

    fn scenario() -> Scenario {
        Scenario {
            initial_state: vec![0.0, 0.0],
            target_state: vec![1.0, 0.0],
            horizon: 1,
            action_lower: vec![-1.0; 2],
            action_upper: vec![1.0; 2],
            initial_effector: vec![0.0, 0.0],
            obstacles: vec![],
            penalty_scale: 100.0,
            weight_ramp: 0.1,
            step_offset: 0,
            cost_form: CostForm::TrackingObstacles,
            features: FeatureMode::Absolute,
            axis_weights: None,
            piece_size: None,
            goal_threshold: Some(1e-6),
        }
    }

    fn manual(states: Vec<Vec<f64>>, effectors: Vec<Vec<f64>>, delta: f64) -> Roadmap {
        let m = MlpModel::identity_dynamics(2, 1).unwrap();
        let step = StepModel::new(&m, &scenario()).unwrap();
        let edges = (0..states.len())
            .map(|i| out_edges(&step, &states[i], &effectors[i], &states, &effectors, Some(i), delta).unwrap())
            .collect();
        Roadmap { states, effectors, edges, threshold: delta }
    }

    #[test]
    fn identical_nodes_connect_both_ways() {
        let r = manual(vec![vec![0.3, 0.3]; 2], vec![vec![0.1, 0.1]; 2], 0.1);
        assert_eq!(r.edges, vec![vec![1], vec![0]]);
        let r = manual(vec![vec![0.3, 0.3]; 2], vec![vec![0.1, 0.1]; 2], 0.0);
        assert_eq!(r.edge_count(), 2);
        let r = manual(vec![vec![0.3, 0.3], vec![0.3, 0.31]], vec![vec![0.1, 0.1]; 2], 0.0);
        assert_eq!(r.edge_count(), 0);
    }

    #[test]
    fn goal_adjacent_to_init_gives_one_edge() {
        // Identity dynamics: x moves with p, so (1, 0) with p = (1, 0) is one step away.
        let r = manual(vec![vec![1.0, 0.0], vec![-3.0, 4.0]], vec![vec![1.0, 0.0], vec![9.0, 9.0]], 0.1);
        let m = MlpModel::identity_dynamics(2, 1).unwrap();
        let path = prm_plan(&r, &m, &scenario()).unwrap();
        assert!(path.success && path.reached_goal);
        assert_eq!(path.actions, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn all_nodes_colliding_fails() {
        let r = manual(vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]], 0.1);
        let mut s = scenario();
        s.obstacles = vec![Obstacle { center: vec![1.0, 0.0], size: 0.5 }];
        let m = MlpModel::identity_dynamics(2, 1).unwrap();
        let path = prm_plan(&r, &m, &s).unwrap();
        assert!(!path.success);
        assert!(path.actions.is_empty());
    }

    #[test]
    fn astar_finds_the_cheaper_detour() {
        let adj = vec![vec![(1, 1.0), (2, 5.0)], vec![(2, 1.0)], vec![]];
        let (p, c) = astar(&adj, 0, 2, |_| 0.0).unwrap();
        assert_eq!(p, vec![0, 1, 2]);
        assert_eq!(c, 2.0);
        assert!(astar(&adj, 2, 0, |_| 0.0).is_none());
    }
}
