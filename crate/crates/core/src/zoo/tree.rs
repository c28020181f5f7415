//! Histogram-based CART shared by the tree, forest and boosting families.
//!
//! Features are discretised once per fit into at most 256 bins. With 256 or
//! fewer distinct values per feature the bins are exact and the splits match
//! exhaustive CART; larger columns use quantile cut points. Splits maximise
//! the weighted squared-error decrease, which for 0/1 targets is proportional
//! to the Gini decrease.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::Rng as ChaRng;

pub const MAX_BINS: usize = 256;

/// Per-feature cut points; bin `b` holds values in `(cuts[b-1], cuts[b]]`.
#[derive(Debug, Clone)]
pub struct Binner {
    cuts: Vec<Vec<f64>>,
}

/// Column-major bin codes.
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub cols: Vec<Vec<u8>>,
}

impl Binner {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let cuts = x
            .columns()
            .into_iter()
            .map(|col| {
                let mut v: Vec<f64> = col.to_vec();
                v.sort_by(|a, b| a.total_cmp(b));
                let mut distinct = v.clone();
                distinct.dedup();
                if distinct.len() <= MAX_BINS {
                    distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let n = v.len();
                    let mut cuts: Vec<f64> = (1..MAX_BINS)
                        .filter_map(|q| {
                            let pos = q * n / MAX_BINS;
                            let lo = v[pos - 1];
                            // next value strictly above lo
                            let hi_idx = v.partition_point(|&a| a <= lo);
                            (hi_idx < n).then(|| 0.5 * (lo + v[hi_idx]))
                        })
                        .collect();
                    cuts.dedup();
                    cuts
                }
            })
            .collect();
        Binner { cuts }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    pub fn cut(&self, feature: usize, bin: usize) -> f64 {
        self.cuts[feature][bin]
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> BinnedMatrix {
        let cols = x
            .columns()
            .into_iter()
            .zip(&self.cuts)
            .map(|(col, cuts)| col.iter().map(|&v| cuts.partition_point(|&c| c < v) as u8).collect())
            .collect();
        BinnedMatrix { n_rows: x.nrows(), cols }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                self.predict_row(&buf)
            })
            .collect()
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter(|n| n.feature != LEAF).map(|n| n.feature as usize).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `>= K` means all.
    pub max_features: usize,
    pub random_splits: bool,
}

#[derive(Clone, Copy, Default)]
struct BinStat {
    w: f64,
    wy: f64,
    count: u32,
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    binner: &'a Binner,
    target: &'a [f64],
    weight: &'a [f64],
    params: GrowParams,
    leaf_value: &'a dyn Fn(&[u32]) -> f64,
    nodes: Vec<Node>,
    hist: Vec<BinStat>,
    features: Vec<usize>,
}

struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Grower<'_> {
    fn best_split(&mut self, rows: &[u32], rng: &mut ChaRng) -> Option<Split> {
        let k = self.binned.cols.len();
        let (mut w_tot, mut s_tot) = (0.0, 0.0);
        for &r in rows {
            w_tot += self.weight[r as usize];
            s_tot += self.weight[r as usize] * self.target[r as usize];
        }
        if w_tot <= 0.0 {
            return None;
        }
        let parent = s_tot * s_tot / w_tot;

        if self.params.max_features < k {
            let pick = rand::seq::index::sample(rng, k, self.params.max_features);
            self.features.clear();
            self.features.extend(pick.iter());
        } else if self.features.len() != k {
            self.features = (0..k).collect();
        }

        let mut best: Option<Split> = None;
        for fi in 0..self.features.len() {
            let f = self.features[fi];
            let nb = self.binner.n_bins(f);
            if nb < 2 {
                continue;
            }
            let hist = &mut self.hist[..nb];
            hist.fill(BinStat::default());
            let col = &self.binned.cols[f];
            for &r in rows {
                let h = &mut hist[col[r as usize] as usize];
                let w = self.weight[r as usize];
                h.w += w;
                h.wy += w * self.target[r as usize];
                h.count += 1;
            }
            let eval = |b: usize, hist: &[BinStat]| -> Option<f64> {
                let (mut wl, mut sl, mut cl) = (0.0, 0.0, 0u32);
                for h in &hist[..=b] {
                    wl += h.w;
                    sl += h.wy;
                    cl += h.count;
                }
                let cr = rows.len() as u32 - cl;
                let (wr, sr) = (w_tot - wl, s_tot - sl);
                if (cl as usize) < self.params.min_leaf || (cr as usize) < self.params.min_leaf || wl <= 0.0 || wr <= 0.0 {
                    return None;
                }
                Some(sl * sl / wl + sr * sr / wr - parent)
            };
            if self.params.random_splits {
                let lo = hist.iter().position(|h| h.count > 0);
                let hi = hist.iter().rposition(|h| h.count > 0);
                let (Some(lo), Some(hi)) = (lo, hi) else { continue };
                if lo == hi {
                    continue;
                }
                let b = rng.random_range(lo..hi);
                if let Some(gain) = eval(b, hist) {
                    if best.as_ref().is_none_or(|s| gain > s.gain) {
                        best = Some(Split { feature: f, bin: b, gain });
                    }
                }
            } else {
                let (mut wl, mut sl, mut cl) = (0.0, 0.0, 0u32);
                for (b, &h) in hist.iter().enumerate().take(nb - 1) {
                    wl += h.w;
                    sl += h.wy;
                    cl += h.count;
                    if h.count == 0 {
                        continue;
                    }
                    let cr = rows.len() as u32 - cl;
                    let (wr, sr) = (w_tot - wl, s_tot - sl);
                    if (cl as usize) < self.params.min_leaf
                        || (cr as usize) < self.params.min_leaf
                        || wl <= 0.0
                        || wr <= 0.0
                    {
                        continue;
                    }
                    let gain = sl * sl / wl + sr * sr / wr - parent;
                    if best.as_ref().is_none_or(|s| gain > s.gain + 1e-12) {
                        best = Some(Split { feature: f, bin: b, gain });
                    }
                }
            }
        }
        best.filter(|s| s.gain > 1e-12 * w_tot.max(1.0))
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize, rng: &mut ChaRng) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        let split = if depth < self.params.max_depth && rows.len() >= 2 * self.params.min_leaf {
            self.best_split(rows, rng)
        } else {
            None
        };
        let Some(split) = split else {
            self.nodes[id as usize].value = (self.leaf_value)(rows);
            return id;
        };
        let col = &self.binned.cols[split.feature];
        let mut mid = 0;
        for i in 0..rows.len() {
            if (col[rows[i] as usize] as usize) <= split.bin {
                rows.swap(i, mid);
                mid += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(mid);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        let node = &mut self.nodes[id as usize];
        node.feature = split.feature as u32;
        node.threshold = self.binner.cut(split.feature, split.bin);
        node.left = left;
        node.right = right;
        id
    }
}

/// Grows one tree on `rows` (rows with zero weight should be excluded by the
/// caller). `leaf_value` maps the rows of a leaf to its output.
#[allow(clippy::too_many_arguments)]
pub fn grow(
    binned: &BinnedMatrix,
    binner: &Binner,
    mut rows: Vec<u32>,
    target: &[f64],
    weight: &[f64],
    params: GrowParams,
    rng: &mut ChaRng,
    leaf_value: &dyn Fn(&[u32]) -> f64,
) -> Tree {
    let mut g = Grower {
        binned,
        binner,
        target,
        weight,
        params,
        leaf_value,
        nodes: Vec::new(),
        hist: vec![BinStat::default(); MAX_BINS],
        features: Vec::new(),
    };
    g.grow(&mut rows, 0, rng);
    Tree { nodes: g.nodes }
}

/// Weighted mean of the target over a leaf's rows.
pub fn weighted_mean<'a>(target: &'a [f64], weight: &'a [f64]) -> impl Fn(&[u32]) -> f64 + 'a {
    move |rows: &[u32]| {
        let (mut w, mut s) = (0.0, 0.0);
        for &r in rows {
            w += weight[r as usize];
            s += weight[r as usize] * target[r as usize];
        }
        if w > 0.0 {
            s / w
        } else {
            0.0
        }
    }
}
