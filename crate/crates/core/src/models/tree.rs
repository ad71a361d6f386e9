use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features inspected per split; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Mean-squared-error regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Builder<'a, R> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    params: &'a TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

impl RegressionTree {
    /// Grows a tree on `rows` (indices into `x`, repeats allowed). `rng` is only
    /// consulted when `max_features` restricts the candidate set.
    pub fn fit<R: Rng>(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: Option<&mut R>,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            features: (0..x.ncols()).collect(),
        };
        b.grow(rows, 0);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.params.max_depth
            || rows.len() < self.params.min_samples_split
            || rows.len() < 2 * self.params.min_samples_leaf
        {
            return id;
        }
        let Some(split) = self.best_split(&rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[[i, split.feature]] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<Split> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let sumsq: f64 = rows.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let parent = total * total / n as f64;
        // Pure node up to rounding.
        if sumsq - parent <= 1e-12 * sumsq {
            return None;
        }
        let p = self.features.len();
        let quota = self.params.max_features.unwrap_or(p).min(p);
        let mut best: Option<Split> = None;
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(n);
        let leaf = self.params.min_samples_leaf.max(1);

        for visited in 0..p {
            if visited >= quota && best.is_some() {
                break;
            }
            let feature = match (&mut self.rng, self.params.max_features) {
                (Some(rng), Some(_)) => {
                    let k = rng.random_range(visited..p);
                    self.features.swap(visited, k);
                    self.features[visited]
                }
                _ => self.features[visited],
            };
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (self.x[[i, feature]], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += sorted[k].1;
                let nl = k + 1;
                if sorted[k].0 == sorted[k + 1].0 || nl < leaf || n - nl < leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64
                    + right_sum * right_sum / (n - nl) as f64
                    - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (a, b) = (sorted[k].0, sorted[k + 1].0);
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best.filter(|s| s.gain > 0.0)
    }
}
