use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::MISSING_BIN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with bin `<= bin` go left.
        bin: u8,
        /// Raw-value form of `bin`: `x <= threshold` goes left.
        threshold: f64,
        default_left: bool,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Output for a row given as bins.
    pub fn eval_binned(&self, bin_of: impl Fn(usize) -> u8) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    bin,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let b = bin_of(*feature);
                    let go_left = if b == MISSING_BIN {
                        *default_left
                    } else {
                        b <= *bin
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

impl Bin {
    fn add(&mut self, o: &Bin) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }
}

/// Histograms for every feature, laid out flat; the last bin of each
/// feature holds missing values.
#[derive(Clone)]
struct Hist {
    bins: Vec<Bin>,
}

pub(crate) struct GrowParams {
    pub num_leaves: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    pub learning_rate: f64,
}

/// Binned training data in column-major order.
pub(crate) struct Binned<'a> {
    pub columns: &'a [Vec<u8>],
    /// Non-missing bin count per feature.
    pub n_bins: &'a [usize],
    pub edges: &'a [Vec<f64>],
    offsets: Vec<usize>,
}

impl<'a> Binned<'a> {
    pub fn new(columns: &'a [Vec<u8>], n_bins: &'a [usize], edges: &'a [Vec<f64>]) -> Self {
        let mut offsets = Vec::with_capacity(n_bins.len() + 1);
        let mut acc = 0;
        for nb in n_bins {
            offsets.push(acc);
            acc += nb + 1;
        }
        offsets.push(acc);
        Binned {
            columns,
            n_bins,
            edges,
            offsets,
        }
    }

    fn build(&self, features: &[usize], rows: &[u32], g: &[f64], h: &[f64]) -> Hist {
        let mut bins = vec![Bin::default(); *self.offsets.last().unwrap()];
        let parts: Vec<(usize, Vec<Bin>)> = features
            .par_iter()
            .map(|&f| {
                let mut local = vec![Bin::default(); self.n_bins[f] + 1];
                let col = &self.columns[f];
                for &r in rows {
                    let r = r as usize;
                    let b = col[r];
                    let k = if b == MISSING_BIN {
                        self.n_bins[f]
                    } else {
                        b as usize
                    };
                    let bin = &mut local[k];
                    bin.g += g[r];
                    bin.h += h[r];
                    bin.n += 1;
                }
                (f, local)
            })
            .collect();
        for (f, local) in parts {
            let o = self.offsets[f];
            bins[o..o + local.len()].copy_from_slice(&local);
        }
        Hist { bins }
    }

    fn subtract(&self, features: &[usize], parent: &Hist, child: &Hist) -> Hist {
        let mut bins = vec![Bin::default(); parent.bins.len()];
        for &f in features {
            for k in self.offsets[f]..self.offsets[f + 1] {
                let (p, c) = (parent.bins[k], child.bins[k]);
                bins[k] = Bin {
                    g: p.g - c.g,
                    h: p.h - c.h,
                    n: p.n - c.n,
                };
            }
        }
        Hist { bins }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub feature: usize,
    pub bin: u8,
    pub default_left: bool,
    pub gain: f64,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(gl + gr, hl + hr, lambda))
}

fn best_for_feature(
    data: &Binned<'_>,
    hist: &Hist,
    f: usize,
    total: Bin,
    p: &GrowParams,
) -> Option<Candidate> {
    let nb = data.n_bins[f];
    let o = data.offsets[f];
    let miss = hist.bins[o + nb];
    let min = p.min_samples_leaf.max(1) as u32;
    let mut best: Option<Candidate> = None;
    let mut left = Bin::default();
    for b in 0..nb {
        left.add(&hist.bins[o + b]);
        let options: &[bool] = if miss.n == 0 {
            &[false]
        } else if b + 1 == nb {
            // everything observed left; only the missing rows can go right
            &[false]
        } else {
            &[false, true]
        };
        for &miss_left in options {
            let mut l = left;
            if miss_left {
                l.add(&miss);
            }
            let r = Bin {
                g: total.g - l.g,
                h: total.h - l.h,
                n: total.n - l.n,
            };
            if l.n < min || r.n < min || l.h + p.lambda <= 0.0 || r.h + p.lambda <= 0.0 {
                continue;
            }
            let gain = split_gain(l.g, l.h, r.g, r.h, p.lambda);
            if !gain.is_finite() || gain <= 0.0 {
                continue;
            }
            let default_left = if miss.n == 0 { l.n >= r.n } else { miss_left };
            if best.map_or(true, |c| gain > c.gain) {
                best = Some(Candidate {
                    feature: f,
                    bin: b as u8,
                    default_left,
                    gain,
                });
            }
        }
    }
    best
}

fn best_split(
    data: &Binned<'_>,
    hist: &Hist,
    features: &[usize],
    total: Bin,
    p: &GrowParams,
) -> Option<Candidate> {
    let per: Vec<Option<Candidate>> = features
        .par_iter()
        .map(|&f| best_for_feature(data, hist, f, total, p))
        .collect();
    // first feature wins ties, independent of scheduling
    per.into_iter()
        .flatten()
        .fold(None, |acc: Option<Candidate>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
}

struct Open {
    node: usize,
    rows: Vec<u32>,
    hist: Hist,
    total: Bin,
    best: Option<Candidate>,
}

fn leaf_value(total: Bin, p: &GrowParams) -> f64 {
    -total.g / (total.h + p.lambda) * p.learning_rate
}

/// Grows one tree leaf-wise over `rows`; returns the tree and each row's
/// output (indexed like `g`).
pub(crate) fn grow(
    data: &Binned<'_>,
    features: &[usize],
    rows: Vec<u32>,
    g: &[f64],
    h: &[f64],
    p: &GrowParams,
) -> (Tree, Vec<(Vec<u32>, f64)>) {
    let hist = data.build(features, &rows, g, h);
    let mut total = Bin::default();
    for &r in &rows {
        total.g += g[r as usize];
        total.h += h[r as usize];
        total.n += 1;
    }
    let best = best_split(data, &hist, features, total, p);
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut open = vec![Open {
        node: 0,
        rows,
        hist,
        total,
        best,
    }];
    while open.len() < p.num_leaves.max(1) {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.best.map(|c| (i, c.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                Some((_, g0)) if g0 >= gain => acc,
                _ => Some((i, gain)),
            });
        let Some((i, _)) = pick else { break };
        let leaf = open.swap_remove(i);
        let c = leaf.best.unwrap();
        let col = &data.columns[c.feature];
        let (mut lrows, mut rrows) = (Vec::new(), Vec::new());
        for &r in &leaf.rows {
            let b = col[r as usize];
            let go_left = if b == MISSING_BIN {
                c.default_left
            } else {
                b <= c.bin
            };
            if go_left {
                lrows.push(r);
            } else {
                rrows.push(r);
            }
        }
        let small_is_left = lrows.len() <= rrows.len();
        let small_hist = data.build(features, if small_is_left { &lrows } else { &rrows }, g, h);
        let large_hist = data.subtract(features, &leaf.hist, &small_hist);
        let (lh, rh) = if small_is_left {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };
        let sum = |rows: &[u32]| {
            let mut t = Bin::default();
            for &r in rows {
                t.g += g[r as usize];
                t.h += h[r as usize];
                t.n += 1;
            }
            t
        };
        let (lt, rt) = (sum(&lrows), sum(&rrows));
        let threshold = data.edges[c.feature]
            .get(c.bin as usize)
            .copied()
            .unwrap_or(f64::MAX);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes[leaf.node] = Node::Split {
            feature: c.feature,
            bin: c.bin,
            threshold,
            default_left: c.default_left,
            gain: c.gain,
            left: li,
            right: ri,
        };
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        for (node, rows, hist, total) in [(li, lrows, lh, lt), (ri, rrows, rh, rt)] {
            let best = best_split(data, &hist, features, total, p);
            open.push(Open {
                node,
                rows,
                hist,
                total,
                best,
            });
        }
    }
    open.sort_by_key(|o| o.node);
    let mut outputs = Vec::with_capacity(open.len());
    for o in open {
        let v = leaf_value(o.total, p);
        nodes[o.node] = Node::Leaf { value: v };
        outputs.push((o.rows, v));
    }
    (Tree { nodes }, outputs)
}
