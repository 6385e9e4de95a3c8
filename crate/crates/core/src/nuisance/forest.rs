//! Regression forest for the arm-wise conditional outcome means.
//!
//! Bootstrap-resampled trees with variance-reduction splits evaluated at
//! midpoints of sorted unique values, a random subset of ceil(p/3)
//! candidate features per node, and a minimum leaf size of 5. Per-tree
//! RNG streams derive from the master seed, so the fit is reproducible
//! bit-for-bit regardless of how many worker threads build trees.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; defaults to ceil(p/3).
    pub mtry: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 200, min_leaf: 5, mtry: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Node {
    /// Split feature; -1 marks a leaf.
    feature: i32,
    threshold: f64,
    left: u32,
    right: u32,
    /// Leaf mean (unused on internal nodes).
    value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature < 0 {
                return node.value;
            }
            at = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    params: ForestParams,
    seed: u64,
    /// Bootstrap membership per tree, kept for out-of-bag evaluation.
    /// Not persisted; a reloaded forest predicts but has no OOB record.
    #[serde(skip)]
    in_bag: Vec<Vec<bool>>,
}

impl Forest {
    pub fn fit(x: &Array2<f64>, y: &[f64], params: ForestParams, seed: u64) -> Self {
        let n = x.nrows();
        let p = x.ncols();
        let mtry = params.mtry.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p);
        let built: Vec<(Tree, Vec<bool>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64 + 1);
                build_tree(x, y, params.min_leaf, mtry, &mut rng, n)
            })
            .collect();
        let mut trees = Vec::with_capacity(built.len());
        let mut in_bag = Vec::with_capacity(built.len());
        for (t, b) in built {
            trees.push(t);
            in_bag.push(b);
        }
        Forest { trees, params, seed, in_bag }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        s / self.trees.len() as f64
    }

    /// Out-of-bag predictions on the training matrix; rows that were in
    /// every bootstrap fall back to the full-forest prediction.
    pub fn oob_predict(&self, x: &Array2<f64>) -> Vec<f64> {
        let n = x.nrows();
        let mut out = Vec::with_capacity(n);
        let mut row = vec![0.0; x.ncols()];
        for i in 0..n {
            for j in 0..x.ncols() {
                row[j] = x[[i, j]];
            }
            let mut s = 0.0;
            let mut c = 0usize;
            for (t, bag) in self.trees.iter().zip(&self.in_bag) {
                if !bag[i] {
                    s += t.predict(&row);
                    c += 1;
                }
            }
            out.push(if c > 0 { s / c as f64 } else { self.predict(&row) });
        }
        out
    }
}

fn build_tree(
    x: &Array2<f64>,
    y: &[f64],
    min_leaf: usize,
    mtry: usize,
    rng: &mut ChaCha8Rng,
    n: usize,
) -> (Tree, Vec<bool>) {
    let p = x.ncols();
    let mut bag = vec![false; n];
    let mut idx: Vec<u32> = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..n);
        bag[i] = true;
        idx.push(i as u32);
    }
    let mut nodes = Vec::new();
    nodes.push(Node { feature: -1, threshold: 0.0, left: 0, right: 0, value: 0.0 });
    // Depth-first expansion with an explicit stack keeps the rng draw
    // order independent of recursion details.
    let mut stack = vec![(0usize, idx)];
    let mut feat_pool: Vec<usize> = (0..p).collect();
    while let Some((node_id, members)) = stack.pop() {
        let m = members.len();
        let (sum, sumsq) = sums(y, &members);
        let mean = sum / m as f64;
        let sse = sumsq - sum * sum / m as f64;
        if m < 2 * min_leaf || sse <= 1e-12 * m as f64 {
            nodes[node_id].value = mean;
            continue;
        }
        // mtry distinct candidate features via partial Fisher-Yates
        for k in 0..mtry {
            let j = rng.random_range(k..p);
            feat_pool.swap(k, j);
        }
        let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, child sse)
        let mut scratch = members.clone();
        for &f in &feat_pool[..mtry] {
            scratch.sort_unstable_by(|&a, &b| {
                x[[a as usize, f]].partial_cmp(&x[[b as usize, f]]).unwrap()
            });
            let mut lsum = 0.0;
            let mut lsumsq = 0.0;
            for s in 1..m {
                let yi = y[scratch[s - 1] as usize];
                lsum += yi;
                lsumsq += yi * yi;
                if s < min_leaf || m - s < min_leaf {
                    continue;
                }
                let xl = x[[scratch[s - 1] as usize, f]];
                let xr = x[[scratch[s] as usize, f]];
                if xl >= xr {
                    continue; // tied values share a side
                }
                let rsum = sum - lsum;
                let rsumsq = sumsq - lsumsq;
                let child_sse = (lsumsq - lsum * lsum / s as f64)
                    + (rsumsq - rsum * rsum / (m - s) as f64);
                if best.is_none_or(|(_, _, b)| child_sse < b) {
                    best = Some((f, 0.5 * (xl + xr), child_sse));
                }
            }
        }
        let Some((f, thr, _)) = best else {
            nodes[node_id].value = mean;
            continue;
        };
        let (left, right): (Vec<u32>, Vec<u32>) =
            members.iter().partition(|&&i| x[[i as usize, f]] <= thr);
        let li = nodes.len();
        nodes.push(Node { feature: -1, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        let ri = nodes.len();
        nodes.push(Node { feature: -1, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        nodes[node_id] =
            Node { feature: f as i32, threshold: thr, left: li as u32, right: ri as u32, value: 0.0 };
        stack.push((ri, right));
        stack.push((li, left));
    }
    (Tree { nodes }, bag)
}

fn sums(y: &[f64], members: &[u32]) -> (f64, f64) {
    let mut s = 0.0;
    let mut ss = 0.0;
    for &i in members {
        let v = y[i as usize];
        s += v;
        ss += v * v;
    }
    (s, ss)
}
