//! Gradient-boosted regression trees with squared loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 150,
            max_depth: 3,
            shrinkage: 0.1,
            min_leaf: 10,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Parameter("gbt max_depth must be >= 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Parameter(format!(
                "gbt shrinkage must be in (0, 1], got {}",
                self.shrinkage
            )));
        }
        if self.min_leaf < 1 {
            return Err(Error::Parameter("gbt min_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base: f64,
    pub shrinkage: f64,
    pub trees: Vec<RegressionTree>,
}

impl GbtModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_staged(x, self.trees.len())
    }

    /// Prediction using only the first `k` trees.
    pub fn predict_staged(&self, x: &[f64], k: usize) -> f64 {
        self.trees[..k]
            .iter()
            .fold(self.base, |acc, t| acc + self.shrinkage * t.predict(x))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.base.is_finite()
            && self.trees.iter().all(|t| {
                t.nodes.iter().all(|n| match *n {
                    Node::Leaf { value } => value.is_finite(),
                    Node::Split { threshold, left, right, .. } => {
                        !threshold.is_nan() && left < t.nodes.len() && right < t.nodes.len()
                    }
                })
            });
        if finite {
            Ok(())
        } else {
            Err(Error::Contract("gbt model has invalid nodes".into()))
        }
    }
}

/// Result of fitting: the model plus the training MSE after each stage
/// (`mse[0]` is the mean-only model).
#[derive(Debug, Clone)]
pub struct GbtFit {
    pub model: GbtModel,
    pub train_mse: Vec<f64>,
}

pub fn fit_gbt<R: AsRef<[f64]>>(rows: &[R], y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    fit_gbt_traced(rows, y, params).map(|f| f.model)
}

pub fn fit_gbt_traced<R: AsRef<[f64]>>(rows: &[R], y: &[f64], params: &GbtParams) -> Result<GbtFit> {
    params.validate()?;
    let n = rows.len();
    if n != y.len() {
        return Err(Error::Contract(format!("{n} rows but {} targets", y.len())));
    }
    if n < 2 * params.min_leaf {
        return Err(Error::Parameter(format!(
            "gbt needs at least {} samples, got {n}",
            2 * params.min_leaf
        )));
    }
    let dim = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::Contract("ragged design matrix".into()));
    }
    let x: Vec<&[f64]> = rows.iter().map(|r| r.as_ref()).collect();

    // Per-feature orderings are fixed across rounds; nodes filter them.
    let sorted: Vec<Vec<usize>> = (0..dim)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&pred)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut in_left = vec![false; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let mut grower = Grower {
            x: &x,
            residual: &residual,
            params,
            in_left: &mut in_left,
        };
        let mut nodes = Vec::new();
        grower.grow(&mut nodes, sorted.clone(), 0);
        let tree = RegressionTree { nodes };
        for i in 0..n {
            pred[i] += params.shrinkage * tree.predict(x[i]);
        }
        train_mse.push(mse(&pred));
        trees.push(tree);
    }
    let model = GbtModel {
        base,
        shrinkage: params.shrinkage,
        trees,
    };
    model.validate()?;
    Ok(GbtFit { model, train_mse })
}

struct Grower<'a> {
    x: &'a [&'a [f64]],
    residual: &'a [f64],
    params: &'a GbtParams,
    in_left: &'a mut [bool],
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    /// Appends the subtree for the samples in `order` and returns its index.
    fn grow(&mut self, nodes: &mut Vec<Node>, order: Vec<Vec<usize>>, depth: usize) -> usize {
        let members = &order[0];
        let n = members.len();
        let sum: f64 = members.iter().map(|&i| self.residual[i]).sum();
        let id = nodes.len();
        nodes.push(Node::Leaf { value: sum / n as f64 });
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&order, sum) else {
            return id;
        };
        for &i in members {
            self.in_left[i] = self.x[i][best.feature] <= best.threshold;
        }
        let (left, right): (Vec<_>, Vec<_>) = order
            .into_iter()
            .map(|idx| idx.into_iter().partition::<Vec<_>, _>(|&i| self.in_left[i]))
            .unzip();
        let l = self.grow(nodes, left, depth + 1);
        let r = self.grow(nodes, right, depth + 1);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, order: &[Vec<usize>], total: f64) -> Option<BestSplit> {
        let n = order[0].len();
        let min_leaf = self.params.min_leaf;
        let parent = total * total / n as f64;
        let scale: f64 = order[0].iter().map(|&i| self.residual[i].powi(2)).sum();
        let mut best: Option<BestSplit> = None;
        for (f, idx) in order.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.residual[idx[k - 1]];
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let lo = self.x[idx[k - 1]][f];
                let hi = self.x[idx[k]][f];
                if !(lo < hi) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / k as f64
                    + right_sum * right_sum / (n - k) as f64
                    - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: midpoint(lo, hi),
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * scale.max(f64::MIN_POSITIVE))
    }
}

/// A threshold `t` with `lo <= t < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}
