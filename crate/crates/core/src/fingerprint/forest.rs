//! Random forest over counter-trace features: bootstrap samples, Gini splits,
//! sqrt(features) candidates per node. Split thresholds are drawn from a
//! per-feature candidate set (all midpoints, or quantile midpoints when a
//! feature has more distinct values than `max_bins`).

use crate::error::{Error, Result};
use crate::fingerprint::trace::InterruptClass;
use crate::rng::{derive_seed, stream};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const NUM_CLASSES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub max_bins: usize,
    pub min_samples_split: usize,
    /// Candidate features per node; 0 means round(sqrt(n_features)).
    #[serde(default)]
    pub max_features: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: 12,
            max_bins: 255,
            min_samples_split: 2,
            max_features: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        class: InterruptClass,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> InterruptClass {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub class_counts: [usize; NUM_CLASSES],
    pub seed: u64,
    pub profile_hash: String,
    pub params: ForestParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    pub training_meta: TrainingMeta,
}

impl ClassifierModel {
    /// Majority vote; ties go to the lower label (Mitigation < ZeroStep < Step).
    pub fn predict(&self, x: &[f64]) -> InterruptClass {
        let mut votes = [0usize; NUM_CLASSES];
        for t in &self.trees {
            votes[t.predict(x).index()] += 1;
        }
        argmax_low(&votes)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported model format {}", m.format_version)));
        }
        Ok(m)
    }
}

fn argmax_low(votes: &[usize; NUM_CLASSES]) -> InterruptClass {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    InterruptClass::from_index(best).unwrap()
}

/// Column-major binned copy of the training matrix.
struct Binned {
    n: usize,
    codes: Vec<Vec<u8>>,
    thresholds: Vec<Vec<f64>>,
}

fn bin_features(x: &[Vec<f64>], n_features: usize, max_bins: usize) -> Binned {
    let n = x.len();
    let max_bins = max_bins.clamp(2, 256);
    let mut codes = Vec::with_capacity(n_features);
    let mut thresholds = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut uniq = vals.clone();
        uniq.dedup();
        let cuts: Vec<f64> = if uniq.len() <= max_bins {
            uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut c: Vec<f64> = (1..max_bins)
                .map(|k| {
                    let i = k * n / max_bins;
                    let lo = vals[i - 1];
                    let hi = vals[i];
                    0.5 * (lo + hi)
                })
                .collect();
            c.dedup();
            c.retain(|t| *t > vals[0] && *t <= vals[n - 1]);
            c
        };
        let col: Vec<u8> = x
            .iter()
            .map(|r| cuts.partition_point(|t| *t <= r[f]) as u8)
            .collect();
        codes.push(col);
        thresholds.push(cuts);
    }
    Binned { n, codes, thresholds }
}

fn gini(counts: &[usize; NUM_CLASSES], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    data: &'a Binned,
    labels: &'a [u8],
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, counts: &[usize; NUM_CLASSES]) -> u32 {
        self.nodes.push(Node::Leaf {
            class: argmax_low(counts),
        });
        (self.nodes.len() - 1) as u32
    }

    fn build<R: Rng>(&mut self, idx: &mut [u32], depth: usize, rng: &mut R) -> u32 {
        let mut counts = [0usize; NUM_CLASSES];
        for &i in idx.iter() {
            counts[self.labels[i as usize] as usize] += 1;
        }
        let total = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || total < self.params.min_samples_split.max(2) {
            return self.leaf(&counts);
        }
        let parent = gini(&counts, total);
        let n_features = self.data.codes.len();
        let feats = sample(rng, n_features, self.mtry.min(n_features));
        let mut best: Option<(f64, usize, usize)> = None;
        let mut hist = vec![[0usize; NUM_CLASSES]; 256];
        for f in feats.iter() {
            let nb = self.data.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            for h in hist[..nb].iter_mut() {
                *h = [0; NUM_CLASSES];
            }
            let col = &self.data.codes[f];
            for &i in idx.iter() {
                hist[col[i as usize] as usize][self.labels[i as usize] as usize] += 1;
            }
            let mut left = [0usize; NUM_CLASSES];
            let mut nl = 0usize;
            for (b, h) in hist[..nb - 1].iter().enumerate() {
                for c in 0..NUM_CLASSES {
                    left[c] += h[c];
                }
                nl += h.iter().sum::<usize>();
                if nl == 0 || nl == total {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
                let nr = total - nl;
                let score = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, b));
                }
            }
        }
        let Some((score, f, b)) = best else {
            return self.leaf(&counts);
        };
        if score >= parent {
            return self.leaf(&counts);
        }
        let col = &self.data.codes[f];
        // in-place partition: codes <= b go left
        let mut lo = 0usize;
        for k in 0..idx.len() {
            if col[idx[k] as usize] as usize <= b {
                idx.swap(lo, k);
                lo += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: InterruptClass::Mitigation,
        });
        let (l, r) = idx.split_at_mut(lo);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: f as u32,
            threshold: self.data.thresholds[f][b],
            left,
            right,
        };
        me as u32
    }
}

/// Fits the ensemble. Trees are built from independent seeded streams, so the
/// result does not depend on thread scheduling.
pub fn train(
    x: &[Vec<f64>],
    y: &[InterruptClass],
    params: &ForestParams,
    seed: u64,
    profile_hash: &str,
) -> Result<ClassifierModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Training("feature and label counts differ or are empty".into()));
    }
    let n_features = x[0].len();
    if n_features == 0 || x.iter().any(|r| r.len() != n_features) {
        return Err(Error::Training("inconsistent feature vector lengths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite feature value".into()));
    }
    let mut class_counts = [0usize; NUM_CLASSES];
    for c in y {
        class_counts[c.index()] += 1;
    }
    if class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Training("training set contains a single class".into()));
    }
    if params.trees == 0 {
        return Err(Error::Training("forest needs at least one tree".into()));
    }
    let data = bin_features(x, n_features, params.max_bins);
    let labels: Vec<u8> = y.iter().map(|c| c.index() as u8).collect();
    let mtry = match params.max_features {
        0 => ((n_features as f64).sqrt().round() as usize).max(1),
        k => k.min(n_features),
    };
    let trees: Vec<Tree> = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(derive_seed(seed, "tree", t as u64), 0);
            let mut idx: Vec<u32> = (0..data.n).map(|_| rng.random_range(0..data.n as u32)).collect();
            let mut b = Builder {
                data: &data,
                labels: &labels,
                params,
                mtry,
                nodes: Vec::new(),
            };
            b.build(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        n_features,
        trees,
        training_meta: TrainingMeta {
            class_counts,
            seed,
            profile_hash: profile_hash.to_string(),
            params: params.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<InterruptClass>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let c = InterruptClass::from_index(i % 3).unwrap();
            let base = (i % 3) as f64 * 10.0;
            x.push(vec![base + (i / 3) as f64 * 0.1, (i * 7 % 5) as f64]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_training_accuracy_is_one() {
        let (x, y) = toy();
        let m = train(&x, &y, &ForestParams::default(), 1, "h").unwrap();
        for (r, c) in x.iter().zip(&y) {
            assert_eq!(m.predict(r), *c);
        }
        assert!(m.trees.iter().all(|t| t.depth() <= 12));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![InterruptClass::Step; 2];
        assert!(matches!(train(&x, &y, &ForestParams::default(), 0, ""), Err(Error::Training(_))));
    }

    #[test]
    fn same_seed_same_model_and_roundtrip() {
        let (x, y) = toy();
        let p = ForestParams {
            trees: 7,
            ..Default::default()
        };
        let a = train(&x, &y, &p, 9, "h").unwrap();
        let b = train(&x, &y, &p, 9, "h").unwrap();
        assert_eq!(a, b);
        let back = ClassifierModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn vote_ties_break_to_lower_label() {
        assert_eq!(argmax_low(&[2, 2, 1]), InterruptClass::Mitigation);
        assert_eq!(argmax_low(&[0, 3, 3]), InterruptClass::ZeroStep);
    }

    #[test]
    fn quantile_bins_still_split_large_columns() {
        let n = 2000;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y: Vec<InterruptClass> = (0..n)
            .map(|i| if i < 1000 { InterruptClass::Mitigation } else { InterruptClass::Step })
            .collect();
        let m = train(&x, &y, &ForestParams { trees: 5, ..Default::default() }, 3, "").unwrap();
        assert_eq!(m.predict(&[10.0]), InterruptClass::Mitigation);
        assert_eq!(m.predict(&[1990.0]), InterruptClass::Step);
    }
}
