//! Bagged CART classifier with out-of-bag evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 100;

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: impl Fn(usize) -> f64 + Copy) -> usize {
        match self {
            Node::Leaf(c) => *c,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row(*feature) <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

/// Column-major training data with per-column sort orders.
struct Columns<'a> {
    cols: &'a [Vec<f64>],
    order: Vec<Vec<usize>>,
    y: &'a [usize],
    classes: usize,
}

impl Columns<'_> {
    fn grow(&self, weight: &[f64], member: &mut [bool]) -> Node {
        let mut counts = vec![0.0; self.classes];
        for (i, &w) in weight.iter().enumerate() {
            if member[i] {
                counts[self.y[i]] += w;
            }
        }
        let total: f64 = counts.iter().sum();
        if counts.iter().filter(|&&c| c > 0.0).count() <= 1 {
            return Node::Leaf(majority(&counts));
        }
        let parent = gini(&counts, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0.0; self.classes];
        let mut right = vec![0.0; self.classes];
        for (f, col) in self.cols.iter().enumerate() {
            left.iter_mut().for_each(|c| *c = 0.0);
            let mut lw = 0.0;
            let mut prev: Option<f64> = None;
            for &i in &self.order[f] {
                if !member[i] || weight[i] == 0.0 {
                    continue;
                }
                let x = col[i];
                if let Some(p) = prev {
                    if x > p {
                        let rw = total - lw;
                        for c in 0..self.classes {
                            right[c] = counts[c] - left[c];
                        }
                        let score = (lw * gini(&left, lw) + rw * gini(&right, rw)) / total;
                        if best.is_none_or(|b| score < b.0 - 1e-12) {
                            best = Some((score, f, 0.5 * (p + x)));
                        }
                    }
                }
                left[self.y[i]] += weight[i];
                lw += weight[i];
                prev = Some(x);
            }
        }
        match best {
            // unpruned growth: any split separating distinct values is taken
            Some((score, feature, threshold)) if score <= parent + 1e-12 => {
                let col = &self.cols[feature];
                let in_node: Vec<usize> = (0..member.len()).filter(|&i| member[i]).collect();
                for &i in &in_node {
                    member[i] = col[i] <= threshold;
                }
                let l = self.grow(weight, member);
                for &i in &in_node {
                    member[i] = col[i] > threshold;
                }
                let r = self.grow(weight, member);
                for &i in &in_node {
                    member[i] = true;
                }
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(l),
                    right: Box::new(r),
                }
            }
            _ => Node::Leaf(majority(&counts)),
        }
    }
}

/// Out-of-bag evaluation of a bagging ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct OobResult {
    /// OOB predicted class per row.
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    /// Correct rate within each class.
    pub class_accuracy: Vec<f64>,
}

/// Trains `trees` unpruned Gini trees on bootstrap resamples of the rows and
/// predicts each row by majority vote of the trees that did not see it.
///
/// `cols[f][i]` is feature `f` of row `i`. Vote ties go to the lower class index.
pub fn bagging_oob(cols: &[Vec<f64>], y: &[usize], classes: usize, trees: usize, seed: u64) -> Result<OobResult> {
    let n = y.len();
    if cols.is_empty() {
        return Err(Error::EmptyMask);
    }
    if cols.iter().any(|c| c.len() != n) || y.iter().any(|&c| c >= classes) {
        return Err(Error::Dimension("feature columns and labels disagree".into()));
    }
    let order = cols
        .iter()
        .map(|c| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
            o
        })
        .collect();
    let data = Columns { cols, order, y, classes };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut votes = vec![vec![0usize; classes]; n];
    let mut weight = vec![0.0; n];
    let mut member = vec![true; n];
    for _ in 0..trees {
        weight.iter_mut().for_each(|w| *w = 0.0);
        for _ in 0..n {
            weight[rng.random_range(0..n)] += 1.0;
        }
        let tree = data.grow(&weight, &mut member);
        for i in (0..n).filter(|&i| weight[i] == 0.0) {
            votes[i][tree.predict(|f| cols[f][i])] += 1;
        }
    }
    let predictions: Vec<usize> = votes
        .iter()
        .map(|v| {
            let mut best = 0;
            for c in 1..classes {
                if v[c] > v[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let correct = predictions.iter().zip(y).filter(|(p, t)| p == t).count();
    let class_accuracy = (0..classes)
        .map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
            if members.is_empty() {
                0.0
            } else {
                members.iter().filter(|&&i| predictions[i] == c).count() as f64 / members.len() as f64
            }
        })
        .collect();
    Ok(OobResult {
        accuracy: correct as f64 / n as f64,
        predictions,
        class_accuracy,
    })
}
