//! Least-squares regression trees used as boosting base learners. In
//! extra-trees mode every candidate feature gets one uniformly random
//! threshold between its node-local minimum and maximum.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Random thresholds (extra-trees) instead of exhaustive search.
    pub extra: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 4,
            min_leaf: 5,
            extra: true,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::domain("min_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    target: &'a [f64],
    cfg: TreeConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

fn mean(target: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| target[i]).sum::<f64>() / rows.len() as f64
}

impl<R: Rng> Builder<'_, R> {
    /// SSE reduction of splitting `rows` on `feature` at `threshold`, or
    /// `None` when a child would be smaller than `min_leaf`.
    fn gain(&self, rows: &[usize], feature: usize, threshold: f64, total: f64) -> Option<f64> {
        let (mut nl, mut sl) = (0usize, 0.0);
        for &i in rows {
            if self.x[[i, feature]] <= threshold {
                nl += 1;
                sl += self.target[i];
            }
        }
        let nr = rows.len() - nl;
        if nl < self.cfg.min_leaf || nr < self.cfg.min_leaf {
            return None;
        }
        let sr = total - sl;
        let n = rows.len() as f64;
        Some(sl * sl / nl as f64 + sr * sr / nr as f64 - total * total / n)
    }

    fn best_random(&mut self, rows: &[usize], total: f64) -> Option<SplitChoice> {
        let mut best: Option<SplitChoice> = None;
        for f in 0..self.x.ncols() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in rows {
                let v = self.x[[i, f]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !(hi > lo) {
                continue;
            }
            let t = lo + (hi - lo) * self.rng.random::<f64>();
            if let Some(g) = self.gain(rows, f, t, total) {
                if best.as_ref().is_none_or(|b| g > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: t,
                        gain: g,
                    });
                }
            }
        }
        best
    }

    fn best_exhaustive(&self, rows: &[usize], total: f64) -> Option<SplitChoice> {
        let n = rows.len();
        let min_leaf = self.cfg.min_leaf;
        let mut best: Option<SplitChoice> = None;
        let mut sorted = rows.to_vec();
        for f in 0..self.x.ncols() {
            sorted.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let mut sl = 0.0;
            for k in 0..n - 1 {
                sl += self.target[sorted[k]];
                let (v, next) = (self.x[[sorted[k], f]], self.x[[sorted[k + 1], f]]);
                let nl = k + 1;
                if v == next || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let sr = total - sl;
                let g = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - total * total / n as f64;
                if best.as_ref().is_none_or(|b| g > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: 0.5 * (v + next),
                        gain: g,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let value = mean(self.target, &rows);
        self.nodes.push(Node::Leaf { value });
        if depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_leaf {
            return id;
        }
        let total: f64 = rows.iter().map(|&i| self.target[i]).sum();
        let choice = if self.cfg.extra {
            self.best_random(&rows, total)
        } else {
            self.best_exhaustive(&rows, total)
        };
        let Some(choice) = choice.filter(|c| c.gain > 0.0) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[[i, choice.feature]] <= choice.threshold);
        drop(rows);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }
}

impl RegressionTree {
    /// Fits `target[i]` on the rows `rows` of `x`.
    pub fn fit<R: Rng>(
        x: ArrayView2<f64>,
        target: &[f64],
        rows: &[usize],
        cfg: &TreeConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if rows.is_empty() {
            return Err(Error::domain("cannot fit a tree on zero rows"));
        }
        if target.len() != x.nrows() {
            return Err(Error::domain("target length differs from feature rows"));
        }
        let mut b = Builder {
            x,
            target,
            cfg: *cfg,
            rng,
            nodes: Vec::new(),
        };
        b.build(rows.to_vec(), 0);
        Ok(RegressionTree { nodes: b.nodes })
    }

    pub fn constant(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::Array2;

    fn step_data() -> (Array2<f64>, Vec<f64>) {
        let x = Array2::from_shape_fn((100, 2), |(i, j)| if j == 0 { i as f64 } else { (i % 7) as f64 });
        let y = (0..100).map(|i| if i < 50 { -1.0 } else { 3.0 }).collect();
        (x, y)
    }

    #[test]
    fn exhaustive_finds_step() {
        let (x, y) = step_data();
        let rows: Vec<usize> = (0..100).collect();
        let cfg = TreeConfig {
            max_depth: 1,
            min_leaf: 5,
            extra: false,
        };
        let t = RegressionTree::fit(x.view(), &y, &rows, &cfg, &mut rng::seeded(0)).unwrap();
        assert_eq!(t.predict(&[10.0, 0.0]), -1.0);
        assert_eq!(t.predict(&[80.0, 0.0]), 3.0);
    }

    #[test]
    fn depth_and_leaf_size_respected() {
        let (x, y) = step_data();
        let y: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + (i as f64).sin()).collect();
        let rows: Vec<usize> = (0..100).collect();
        for extra in [true, false] {
            let cfg = TreeConfig {
                max_depth: 3,
                min_leaf: 7,
                extra,
            };
            let t = RegressionTree::fit(x.view(), &y, &rows, &cfg, &mut rng::seeded(1)).unwrap();
            assert!(t.depth() <= 3);
            assert!(t.num_leaves() <= 8);
        }
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let (x, _) = step_data();
        let rows: Vec<usize> = (0..100).collect();
        let t = RegressionTree::fit(
            x.view(),
            &[2.5; 100],
            &rows,
            &TreeConfig::default(),
            &mut rng::seeded(2),
        )
        .unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[0.0, 0.0]), 2.5);
    }
}
