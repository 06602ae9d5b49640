//! Score-gated top-k pooling and mean/max graph readout.

use super::batch::GraphBatch;
use super::tensor::{Real, Tensor};
use super::GnnError;

/// `⌈ratio · n⌉`, at least 1 for `n ≥ 1`. A tiny slack keeps products such
/// as `0.8 · 5` from rounding up past the exact integer.
pub fn keep_count(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (ratio * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n)
}

#[derive(Debug, Clone)]
pub struct PoolOutput<T = f32> {
    /// Gated features of the kept nodes, in `kept` order.
    pub features: Tensor<T>,
    /// Induced, renormalized subgraph over the kept nodes.
    pub batch: GraphBatch<T>,
    /// Kept global node ids, ascending within each graph.
    pub kept: Vec<usize>,
    /// Scores of every input node.
    pub scores: Vec<T>,
}

/// Keeps the `⌈ratio · n⌉` best-scoring nodes of each graph, with
/// `s_v = h_v · p / ‖p‖`, ties broken by ascending node id, and gates each
/// kept row by `tanh(s_v)`.
pub fn topk_pool<T: Real>(
    h: &Tensor<T>,
    batch: &GraphBatch<T>,
    score: &Tensor<T>,
    ratio: f64,
) -> Result<PoolOutput<T>, GnnError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(GnnError::InvalidConfig(format!("pooling ratio {ratio} outside (0, 1]")));
    }
    if h.rows() != batch.num_nodes() || score.len() != h.cols() {
        return Err(GnnError::ShapeMismatch(format!(
            "pooling {:?} features with a {}-element score vector over {} nodes",
            h.shape(),
            score.len(),
            batch.num_nodes()
        )));
    }
    let norm = score_norm(score);
    let scores: Vec<T> = (0..h.rows())
        .map(|v| h.row(v).iter().zip(score.data()).map(|(&a, &b)| a * b).sum::<T>() / norm)
        .collect();
    let mut kept = Vec::new();
    for g in 0..batch.num_graphs() {
        let range = batch.graph_range(g);
        let k = keep_count(range.len(), ratio);
        let mut order: Vec<usize> = range.collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let mut chosen = order[..k].to_vec();
        chosen.sort_unstable();
        kept.extend(chosen);
    }
    let c = h.cols();
    let mut data = Vec::with_capacity(kept.len() * c);
    for &v in &kept {
        let gate = scores[v].tanh();
        data.extend(h.row(v).iter().map(|&x| x * gate));
    }
    let features = Tensor::from_vec(&[kept.len(), c], data)?;
    let pooled = batch.induced(&kept, features.clone())?;
    Ok(PoolOutput {
        features,
        batch: pooled,
        kept,
        scores,
    })
}

fn score_norm<T: Real>(score: &Tensor<T>) -> T {
    let n = score.data().iter().map(|&v| v * v).sum::<T>().sqrt();
    n.max(T::min_positive_value())
}

/// Returns `dH` and adds `dp` into `d_score`.
pub(crate) fn topk_pool_backward<T: Real>(
    h: &Tensor<T>,
    score: &Tensor<T>,
    out: &PoolOutput<T>,
    d_out: &Tensor<T>,
    d_score: &mut Tensor<T>,
) -> Tensor<T> {
    let norm = score_norm(score);
    let p = score.data();
    let mut d_h = Tensor::zeros(h.shape());
    for (i, &v) in out.kept.iter().enumerate() {
        let s = out.scores[v];
        let t = s.tanh();
        let g = d_out.row(i);
        let hv = h.row(v);
        let d_t: T = g.iter().zip(hv).map(|(&a, &b)| a * b).sum();
        let d_s = d_t * (T::one() - t * t);
        let row = d_h.row_mut(v);
        for ((o, &gi), &pi) in row.iter_mut().zip(g).zip(p) {
            *o += gi * t + d_s * pi / norm;
        }
        for ((o, &hi), &pi) in d_score.data_mut().iter_mut().zip(hv).zip(p) {
            *o += d_s * (hi - s * pi / norm) / norm;
        }
    }
    d_h
}

/// Per graph `[mean ‖ max]` over its nodes; also returns, per graph and
/// column, the node that supplied the max (first on ties). The mean is
/// accumulated in f64 so that it does not depend on node order.
pub fn mean_max<T: Real>(h: &Tensor<T>, offsets: &[usize]) -> (Tensor<T>, Vec<Vec<usize>>) {
    let c = h.cols();
    let graphs = offsets.len() - 1;
    let mut out = Tensor::zeros(&[graphs, 2 * c]);
    let mut argmax = Vec::with_capacity(graphs);
    for g in 0..graphs {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        let mut sum = vec![0.0f64; c];
        let mut best = vec![lo; c];
        for v in lo..hi {
            for (j, &x) in h.row(v).iter().enumerate() {
                sum[j] += x.to_f64();
                if x > h.at(best[j], j) {
                    best[j] = v;
                }
            }
        }
        let row = out.row_mut(g);
        for j in 0..c {
            row[j] = T::from_f64(sum[j] / (hi - lo) as f64);
            row[c + j] = h.at(best[j], j);
        }
        argmax.push(best);
    }
    (out, argmax)
}

pub(crate) fn mean_max_backward<T: Real>(
    rows: usize,
    offsets: &[usize],
    argmax: &[Vec<usize>],
    d_out: &Tensor<T>,
) -> Tensor<T> {
    let c = d_out.cols() / 2;
    let mut d_h = Tensor::zeros(&[rows, c]);
    for (g, best) in argmax.iter().enumerate() {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        let inv = T::one() / T::from_f64((hi - lo) as f64);
        let d = d_out.row(g);
        for v in lo..hi {
            for (o, &x) in d_h.row_mut(v).iter_mut().zip(&d[..c]) {
                *o += x * inv;
            }
        }
        for (j, &v) in best.iter().enumerate() {
            let cols = d_h.cols();
            d_h.data_mut()[v * cols + j] += d[c + j];
        }
    }
    d_h
}
