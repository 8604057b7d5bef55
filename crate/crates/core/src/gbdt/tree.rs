//! Regression trees grown with exact greedy Newton-gain splits.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{invalid, Result};

/// Below this, `sum(h) + lambda` is treated as zero and the leaf outputs 0.
pub const HESSIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub feature: usize,
    /// Go left iff `x[feature] <= threshold`.
    pub threshold: f64,
    pub left: Child,
    pub right: Child,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub value: f64,
    /// Sorted training rows routed to this leaf. Empty for compacted models.
    #[serde(default)]
    pub instance_ids: Vec<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<SplitNode>,
    pub leaves: Vec<Leaf>,
}

impl RegressionTree {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Index of the leaf `x` lands in.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut node = &self.nodes[0];
        loop {
            let next = if x[node.feature] <= node.threshold {
                node.left
            } else {
                node.right
            };
            match next {
                Child::Node(i) => node = &self.nodes[i],
                Child::Leaf(l) => return l,
            }
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_index(x)].value
    }

    pub fn has_instance_sets(&self) -> bool {
        self.leaves.iter().all(|l| l.instance_ids.len() == l.count)
    }

    pub(crate) fn strip_instance_sets(&mut self) {
        for leaf in &mut self.leaves {
            leaf.instance_ids = Vec::new();
        }
    }

    pub(crate) fn approx_bytes(&self) -> usize {
        self.nodes.len() * std::mem::size_of::<SplitNode>()
            + self
                .leaves
                .iter()
                .map(|l| std::mem::size_of::<Leaf>() + l.instance_ids.len() * 8)
                .sum::<usize>()
    }
}

/// Growth limits and regularisation for one tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_leaves: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
    pub eta: f64,
    pub lambda: f64,
    pub min_gain: f64,
}

/// One-step Newton leaf value, shrunk by `eta`.
#[inline]
pub fn newton_leaf_value(sum_g: f64, sum_h: f64, lambda: f64, eta: f64) -> f64 {
    let denom = sum_h + lambda;
    if denom < HESSIAN_FLOOR {
        0.0
    } else {
        -(sum_g / denom) * eta
    }
}

#[inline]
fn gain_term(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom < HESSIAN_FLOOR {
        0.0
    } else {
        g * g / denom
    }
}

/// Newton gain of splitting `(g, h)` into `(gl, hl)` and the remainder.
#[inline]
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64) -> f64 {
    gain_term(gl, hl, lambda) + gain_term(g - gl, h - hl, lambda) - gain_term(g, h, lambda)
}

/// Per-feature row orderings, computed once per training run.
pub struct TreeBuilder<'a> {
    data: &'a Dataset,
    sorted: Vec<Vec<u32>>,
    /// Column-major copy of the features.
    columns: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Candidate {
    /// Row lists per feature, each sorted by that feature's value.
    rows: Vec<Vec<u32>>,
    depth: usize,
    split: Option<SplitChoice>,
    arena_id: usize,
}

enum Temp {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Vec<u32>),
    Pending,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let n = data.n_rows();
        let sorted = (0..data.n_features())
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    data.value(a as usize, f)
                        .total_cmp(&data.value(b as usize, f))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        let columns = (0..data.n_features())
            .map(|f| (0..n).map(|i| data.value(i, f)).collect())
            .collect();
        Self { data, sorted, columns }
    }

    /// Grows one tree best-first on gradients `g` and hessians `h`.
    pub fn build(&self, g: &[f64], h: &[f64], params: &TreeParams) -> Result<RegressionTree> {
        let n = self.data.n_rows();
        if g.len() != n || h.len() != n {
            return Err(invalid(format!(
                "gradient/hessian length {}/{} does not match {} rows",
                g.len(),
                h.len(),
                n
            )));
        }
        if params.min_leaf_size == 0 {
            return Err(invalid("min_leaf_size must be >= 1"));
        }
        let mut arena = vec![Temp::Pending];
        let mut root = Candidate {
            rows: self.sorted.clone(),
            depth: 0,
            split: None,
            arena_id: 0,
        };
        root.split = self.best_split(&root, g, h, params);
        let mut frontier = vec![root];
        let mut goes_left = vec![false; n];
        let max_leaves = params.max_leaves.unwrap_or(usize::MAX).max(1);

        while frontier.len() < max_leaves {
            // highest gain; earliest candidate wins ties
            let mut pick: Option<usize> = None;
            for (i, c) in frontier.iter().enumerate() {
                if let Some(s) = c.split {
                    if pick.is_none_or(|p| s.gain > frontier[p].split.unwrap().gain) {
                        pick = Some(i);
                    }
                }
            }
            let Some(pick) = pick else { break };
            let cand = frontier.remove(pick);
            let split = cand.split.unwrap();
            let col = &self.columns[split.feature];
            for &r in &cand.rows[split.feature] {
                goes_left[r as usize] = col[r as usize] <= split.threshold;
            }
            let n_left = cand.rows[0].iter().filter(|&&r| goes_left[r as usize]).count();
            let n_right = cand.rows[0].len() - n_left;
            let mut left_rows = Vec::with_capacity(cand.rows.len());
            let mut right_rows = Vec::with_capacity(cand.rows.len());
            for list in &cand.rows {
                let mut l = Vec::with_capacity(n_left);
                let mut r = Vec::with_capacity(n_right);
                for &row in list {
                    if goes_left[row as usize] {
                        l.push(row);
                    } else {
                        r.push(row);
                    }
                }
                left_rows.push(l);
                right_rows.push(r);
            }
            let left_id = arena.len();
            arena.push(Temp::Pending);
            let right_id = arena.len();
            arena.push(Temp::Pending);
            arena[cand.arena_id] = Temp::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: left_id,
                right: right_id,
            };
            for (rows, id) in [(left_rows, left_id), (right_rows, right_id)] {
                let mut child = Candidate {
                    rows,
                    depth: cand.depth + 1,
                    split: None,
                    arena_id: id,
                };
                child.split = self.best_split(&child, g, h, params);
                frontier.push(child);
            }
        }
        for cand in frontier {
            let mut ids = cand.rows.into_iter().next().unwrap_or_default();
            ids.sort_unstable();
            arena[cand.arena_id] = Temp::Leaf(ids);
        }
        Ok(finalize(arena, g, h, params))
    }

    fn best_split(&self, cand: &Candidate, g: &[f64], h: &[f64], params: &TreeParams) -> Option<SplitChoice> {
        if params.max_depth.is_some_and(|d| cand.depth >= d) {
            return None;
        }
        let m = cand.rows[0].len();
        if m < 2 * params.min_leaf_size {
            return None;
        }
        let (sum_g, sum_h) = cand.rows[0]
            .iter()
            .fold((0.0, 0.0), |(a, b), &r| (a + g[r as usize], b + h[r as usize]));
        let mut best: Option<SplitChoice> = None;
        for (f, list) in cand.rows.iter().enumerate() {
            let col = &self.columns[f];
            let mut gl = 0.0;
            let mut hl = 0.0;
            for k in 0..m - 1 {
                let r = list[k] as usize;
                gl += g[r];
                hl += h[r];
                let left_n = k + 1;
                if left_n < params.min_leaf_size {
                    continue;
                }
                if m - left_n < params.min_leaf_size {
                    break;
                }
                let x = col[r];
                let x_next = col[list[k + 1] as usize];
                if x_next <= x {
                    continue;
                }
                let gain = split_gain(gl, hl, sum_g, sum_h, params.lambda);
                if gain > params.min_gain && best.is_none_or(|b| gain > b.gain) {
                    let mut threshold = x + (x_next - x) / 2.0;
                    if threshold >= x_next {
                        threshold = x;
                    }
                    best = Some(SplitChoice {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

fn finalize(mut arena: Vec<Temp>, g: &[f64], h: &[f64], params: &TreeParams) -> RegressionTree {
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    if let Temp::Leaf(_) = arena[0] {
        let Temp::Leaf(ids) = std::mem::replace(&mut arena[0], Temp::Pending) else {
            unreachable!()
        };
        tree.leaves.push(make_leaf(ids, g, h, params));
        return tree;
    }
    emit(&mut arena, 0, &mut tree, g, h, params);
    tree
}

/// Pre-order node numbering, left-to-right leaf numbering.
fn emit(arena: &mut [Temp], id: usize, tree: &mut RegressionTree, g: &[f64], h: &[f64], params: &TreeParams) -> Child {
    match std::mem::replace(&mut arena[id], Temp::Pending) {
        Temp::Leaf(ids) => {
            tree.leaves.push(make_leaf(ids, g, h, params));
            Child::Leaf(tree.leaves.len() - 1)
        }
        Temp::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let me = tree.nodes.len();
            tree.nodes.push(SplitNode {
                feature,
                threshold,
                left: Child::Leaf(0),
                right: Child::Leaf(0),
            });
            let l = emit(arena, left, tree, g, h, params);
            let r = emit(arena, right, tree, g, h, params);
            tree.nodes[me].left = l;
            tree.nodes[me].right = r;
            Child::Node(me)
        }
        Temp::Pending => unreachable!("tree arena left a pending node"),
    }
}

fn make_leaf(ids: Vec<u32>, g: &[f64], h: &[f64], params: &TreeParams) -> Leaf {
    let (sg, sh) = ids
        .iter()
        .fold((0.0, 0.0), |(a, b), &r| (a + g[r as usize], b + h[r as usize]));
    Leaf {
        value: newton_leaf_value(sg, sh, params.lambda, params.eta),
        count: ids.len(),
        instance_ids: ids.into_iter().map(|r| r as usize).collect(),
    }
}

/// Convenience wrapper that sorts rows and builds a single tree.
pub fn build_tree(data: &Dataset, g: &[f64], h: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    TreeBuilder::new(data).build(g, h, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eta: f64, lambda: f64) -> TreeParams {
        TreeParams {
            max_leaves: Some(31),
            max_depth: None,
            min_leaf_size: 1,
            eta,
            lambda,
            min_gain: 1e-12,
        }
    }

    #[test]
    fn symmetric_gradients_give_zero_stump() {
        let d = Dataset::regression(vec![0.0, 0.0], 1, vec![0.0, 0.0]).unwrap();
        let t = build_tree(&d, &[1.0, -1.0], &[1.0, 1.0], &params(1.0, 0.0)).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.leaves[0].value, 0.0);
        assert_eq!(t.leaves[0].instance_ids, vec![0, 1]);
    }

    #[test]
    fn single_instance_leaf_value() {
        let d = Dataset::regression(vec![0.0], 1, vec![0.0]).unwrap();
        let t = build_tree(&d, &[2.0], &[1.0], &params(0.5, 1.0)).unwrap();
        assert_eq!(t.leaves[0].value, -0.5);
    }

    #[test]
    fn separable_pair_splits_at_midpoint() {
        let d = Dataset::regression(vec![0.0, 1.0], 1, vec![0.0, 0.0]).unwrap();
        let (eta, lambda) = (0.3, 0.5);
        let g = [1.0, -1.0];
        let h = [1.0, 1.0];
        let t = build_tree(&d, &g, &h, &TreeParams { max_depth: Some(1), ..params(eta, lambda) }).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].threshold, 0.5);
        assert!((t.leaves[0].value + eta / (1.0 + lambda)).abs() < 1e-15);
        assert!((t.leaves[1].value - eta / (1.0 + lambda)).abs() < 1e-15);

        // brute force over every candidate threshold: the chosen one is maximal
        let xs = [0.0, 1.0];
        let chosen = split_gain(1.0, 1.0, 0.0, 2.0, lambda);
        for thr in [-0.5, 0.5, 1.5] {
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..2 {
                if xs[i] <= thr {
                    gl += g[i];
                    hl += h[i];
                }
            }
            assert!(split_gain(gl, hl, 0.0, 2.0, lambda) <= chosen);
        }
    }

    #[test]
    fn ties_prefer_lowest_feature_then_threshold() {
        // both features separate the rows identically
        let d = Dataset::regression(vec![0.0, 5.0, 1.0, 6.0], 2, vec![0.0, 0.0]).unwrap();
        let t = build_tree(&d, &[1.0, -1.0], &[1.0, 1.0], &params(1.0, 0.0)).unwrap();
        assert_eq!(t.nodes[0].feature, 0);
    }

    #[test]
    fn respects_leaf_and_depth_limits() {
        let n = 64;
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let d = Dataset::regression(xs.clone(), 1, vec![0.0; n]).unwrap();
        let g: Vec<f64> = xs.iter().map(|x| (x * 0.37).sin()).collect();
        let h = vec![1.0; n];
        let t = build_tree(&d, &g, &h, &TreeParams { max_leaves: Some(5), ..params(1.0, 0.0) }).unwrap();
        assert!(t.leaf_count() <= 5);
        let t = build_tree(
            &d,
            &g,
            &h,
            &TreeParams { max_leaves: None, max_depth: Some(2), min_leaf_size: 4, ..params(1.0, 0.0) },
        )
        .unwrap();
        assert!(t.leaf_count() <= 4);
        assert!(t.leaves.iter().all(|l| l.count >= 4));
        let total: usize = t.leaves.iter().map(|l| l.count).sum();
        assert_eq!(total, n);
    }
}
