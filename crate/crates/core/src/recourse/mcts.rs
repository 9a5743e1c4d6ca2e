//! Monte Carlo tree search over intervention sets.
//!
//! Tree nodes are sets of actions on distinct features, grown in canonical
//! (schema) order so each set has one node. A node whose set flips the
//! decision is a leaf with reward `1 / (1 + cost)`. Rollouts extend a set with
//! random actions until the decision flips or the length limit is reached.
//! The returned plan is the cheapest flipping set seen anywhere during search.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::space::ActionSpace;
use super::{plan_order, Exclusions, RecourseError, RecourseProblem, RecourseResult, SearchBudget};
use crate::schema::Intervention;

/// How many of the cheapest distinct flipping sets a search reports.
const MAX_ALTERNATIVES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: RecourseResult,
    /// Flipping interventions seen during search, cheapest first, including `best`.
    pub alternatives: Vec<(Intervention, f64)>,
    pub rollouts_used: usize,
}

struct Node {
    set: Vec<u32>,
    children: Vec<u32>,
    untried: Vec<u32>,
    visits: u32,
    value: f64,
    /// Reward for leaves, `None` for expandable nodes.
    leaf_reward: Option<f64>,
    exhausted: bool,
}

struct Search<'p, 's> {
    problem: &'p RecourseProblem<'p>,
    space: &'s ActionSpace,
    budget: &'s SearchBudget,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
    flip_cache: HashMap<Vec<u32>, bool>,
    found: HashMap<Vec<u32>, f64>,
    best: Option<(Vec<u32>, f64)>,
}

impl Search<'_, '_> {
    fn flips(&mut self, set: &[u32]) -> bool {
        if let Some(&f) = self.flip_cache.get(set) {
            return f;
        }
        let f = self.space.flips(set, self.problem.classifier, &mut self.scratch);
        self.flip_cache.insert(set.to_vec(), f);
        f
    }

    /// Reward of a flipping, non-excluded set (recording it), or `None`.
    fn success(&mut self, set: &[u32]) -> Option<f64> {
        if !self.flips(set) || self.space.is_excluded(set) {
            return None;
        }
        let cost = self.space.cost(set);
        if !self.found.contains_key(set) {
            self.found.insert(set.to_vec(), cost);
            let better = match &self.best {
                None => true,
                Some((b, bc)) => plan_order((cost, set), (*bc, b)) == Ordering::Less,
            };
            if better {
                self.best = Some((set.to_vec(), cost));
            }
        }
        Some(1.0 / (1.0 + cost))
    }

    fn make_node(&mut self, set: Vec<u32>) -> Node {
        let leaf_reward = if let Some(r) = self.success(&set) {
            Some(r)
        } else if set.len() >= self.budget.max_intervention_len {
            Some(0.0)
        } else {
            None
        };
        let mut untried = Vec::new();
        if leaf_reward.is_none() {
            let after = set.last().map(|&k| self.space.feature[k as usize]);
            for &(fi, start, end) in &self.space.groups {
                if after.is_none_or(|a| fi > a) {
                    untried.extend(start as u32..end as u32);
                }
            }
            untried.shuffle(&mut self.rng);
        }
        let leaf_reward = match leaf_reward {
            None if untried.is_empty() => Some(0.0),
            r => r,
        };
        Node {
            set,
            children: Vec::new(),
            untried,
            visits: 0,
            value: 0.0,
            exhausted: leaf_reward.is_some(),
            leaf_reward,
        }
    }

    fn rollout(&mut self, set: &[u32]) -> f64 {
        let mut cur = set.to_vec();
        let mut open: Vec<usize> = (0..self.space.groups.len())
            .filter(|&g| {
                let fi = self.space.groups[g].0;
                !cur.iter().any(|&k| self.space.feature[k as usize] == fi)
            })
            .collect();
        while cur.len() < self.budget.max_intervention_len && !open.is_empty() {
            let g = open.swap_remove(self.rng.random_range(0..open.len()));
            let (_, start, end) = self.space.groups[g];
            let k = self.rng.random_range(start..end) as u32;
            let pos = cur.partition_point(|&c| c < k);
            cur.insert(pos, k);
            if let Some(r) = self.success(&cur) {
                return r;
            }
        }
        0.0
    }

    fn select(&self, nodes: &[Node], parent: usize) -> Option<usize> {
        let p = &nodes[parent];
        let log_n = f64::from(p.visits.max(1)).ln();
        let mut best: Option<(usize, f64)> = None;
        for &c in &p.children {
            let n = &nodes[c as usize];
            if n.exhausted {
                continue;
            }
            let visits = f64::from(n.visits.max(1));
            let score = n.value / visits + self.budget.uct_constant * (log_n / visits).sqrt();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((c as usize, score));
            }
        }
        best.map(|(c, _)| c)
    }

    fn run(&mut self) -> usize {
        let root = self.make_node(Vec::new());
        let mut nodes = vec![root];
        let mut used = 0;
        while used < self.budget.max_rollouts && !nodes[0].exhausted {
            used += 1;
            let mut path = vec![0usize];
            let mut cur = 0usize;
            let reward = loop {
                if let Some(r) = nodes[cur].leaf_reward {
                    break r;
                }
                if let Some(a) = nodes[cur].untried.pop() {
                    let mut set = nodes[cur].set.clone();
                    set.push(a);
                    let child = self.make_node(set);
                    let id = nodes.len();
                    nodes.push(child);
                    nodes[cur].children.push(id as u32);
                    path.push(id);
                    break match nodes[id].leaf_reward {
                        Some(r) => r,
                        None => {
                            let s = nodes[id].set.clone();
                            self.rollout(&s)
                        }
                    };
                }
                match self.select(&nodes, cur) {
                    Some(c) => {
                        cur = c;
                        path.push(c);
                    }
                    None => break 0.0,
                }
            };
            for &id in path.iter().rev() {
                nodes[id].visits += 1;
                nodes[id].value += reward;
                if !nodes[id].exhausted && nodes[id].untried.is_empty() {
                    let n = &nodes[id];
                    let done = n.children.iter().all(|&c| nodes[c as usize].exhausted);
                    nodes[id].exhausted = done;
                }
            }
        }
        used
    }
}

/// Cheapest flipping intervention found, with alternatives, avoiding `exclusions`.
pub fn mcts_explore(
    problem: &RecourseProblem<'_>,
    budget: &SearchBudget,
    exclusions: &Exclusions,
) -> Result<SearchOutcome, RecourseError> {
    budget.check()?;
    let space = ActionSpace::build(problem, exclusions)?;
    let mut search = Search {
        problem,
        space: &space,
        budget,
        rng: ChaCha8Rng::seed_from_u64(budget.seed),
        scratch: Vec::with_capacity(problem.schema.encoded_len()),
        flip_cache: HashMap::new(),
        found: HashMap::new(),
        best: None,
    };
    let rollouts_used = search.run();
    let Some((best_set, _)) = search.best.clone() else {
        return Err(RecourseError::NoRecourse { rollouts_used });
    };
    let best = RecourseResult::evaluate(problem, space.intervention(&best_set), rollouts_used)?;
    assert!(best.valid, "search returned a non-flipping intervention");
    let mut found: Vec<(Vec<u32>, f64)> = search.found.into_iter().collect();
    found.sort_by(|a, b| plan_order((a.1, &a.0), (b.1, &b.0)));
    found.truncate(MAX_ALTERNATIVES);
    let alternatives = found.into_iter().map(|(s, c)| (space.intervention(&s), c)).collect();
    Ok(SearchOutcome {
        best,
        alternatives,
        rollouts_used,
    })
}

pub fn mcts_search(problem: &RecourseProblem<'_>, budget: &SearchBudget) -> Result<RecourseResult, RecourseError> {
    mcts_explore(problem, budget, &Exclusions::default()).map(|o| o.best)
}
