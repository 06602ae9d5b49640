//! GCN, GAT, and GIN message-passing layers.
//!
//! Each layer's forward pass returns a cache that its backward pass consumes;
//! gradients are accumulated into a parameter-shaped [`Layer`].

use super::batch::GraphBatch;
use super::tensor::{Real, Tensor};
use super::GnnError;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead<T = f32> {
    /// `(d_in, f)`.
    pub weight: Tensor<T>,
    /// `2f` entries: the first half scores the receiving node, the second
    /// half the sending node.
    pub attention: Tensor<T>,
}

/// Linear, ReLU, Linear.
#[derive(Debug, Clone, PartialEq)]
pub struct GinMlp<T = f32> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Gcn { weight: Tensor<T> },
    /// `concat`: heads are concatenated (hidden layers) or averaged (final).
    Gat { heads: Vec<GatHead<T>>, concat: bool },
    /// `eps` holds one element.
    Gin { mlp: GinMlp<T>, eps: Tensor<T> },
}

pub(crate) enum LayerCache<T> {
    Gcn {
        input: Tensor<T>,
        output: Tensor<T>,
    },
    Gat {
        input: Tensor<T>,
        heads: Vec<HeadCache<T>>,
        output: Tensor<T>,
    },
    Gin {
        input: Tensor<T>,
        agg: Tensor<T>,
        m1: Tensor<T>,
        hidden: Tensor<T>,
    },
}

pub(crate) struct HeadCache<T> {
    z: Tensor<T>,
    /// Aligned with the columns of `norm_adj[v]`.
    alpha: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

fn relu<T: Real>(mut t: Tensor<T>) -> Tensor<T> {
    t.map_inplace(|v| v.max(T::zero()));
    t
}

/// `grad ⊙ [out > 0]`.
fn relu_back<T: Real>(grad: &Tensor<T>, out: &Tensor<T>) -> Tensor<T> {
    let data = grad
        .data()
        .iter()
        .zip(out.data())
        .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad.shape(), data).expect("same shape")
}

fn check_rows<T: Real>(h: &Tensor<T>, batch: &GraphBatch<T>) -> Result<(), GnnError> {
    if h.rows() != batch.num_nodes() {
        return Err(GnnError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            h.rows(),
            batch.num_nodes()
        )));
    }
    Ok(())
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `ReLU(Â H W)`.
pub fn gcn_layer<T: Real>(h: &Tensor<T>, batch: &GraphBatch<T>, weight: &Tensor<T>) -> Result<Tensor<T>, GnnError> {
    check_rows(h, batch)?;
    Ok(relu(batch.propagate(&h.matmul(weight)?)))
}

/// Attention coefficients of one head; row `v` is aligned with the columns
/// of `batch.norm_adj[v]` (the neighbors plus `v` itself).
pub fn gat_attention<T: Real>(h: &Tensor<T>, batch: &GraphBatch<T>, head: &GatHead<T>) -> Result<Vec<Vec<T>>, GnnError> {
    check_rows(h, batch)?;
    Ok(gat_head(h, batch, head)?.alpha)
}

fn gat_head<T: Real>(h: &Tensor<T>, batch: &GraphBatch<T>, head: &GatHead<T>) -> Result<HeadCache<T>, GnnError> {
    let z = h.matmul(&head.weight)?;
    let f = z.cols();
    if head.attention.len() != 2 * f {
        return Err(GnnError::ShapeMismatch(format!(
            "attention vector of length {} for head width {f}",
            head.attention.len()
        )));
    }
    let (a_dst, a_src) = head.attention.data().split_at(f);
    let n = z.rows();
    let s_dst: Vec<T> = (0..n).map(|v| dot(z.row(v), a_dst)).collect();
    let s_src: Vec<T> = (0..n).map(|v| dot(z.row(v), a_src)).collect();
    let slope = T::from_f64(LEAKY_SLOPE);
    let mut alpha = Vec::with_capacity(n);
    let mut pre_all = Vec::with_capacity(n);
    for v in 0..n {
        let pre: Vec<T> = batch.norm_adj[v].iter().map(|&(u, _)| s_dst[v] + s_src[u]).collect();
        let e: Vec<T> = pre.iter().map(|&p| if p > T::zero() { p } else { slope * p }).collect();
        let max = e.iter().copied().fold(T::neg_infinity(), T::max);
        let exp: Vec<T> = e.iter().map(|&x| (x - max).exp()).collect();
        let total: T = exp.iter().copied().sum();
        alpha.push(exp.into_iter().map(|x| x / total).collect());
        pre_all.push(pre);
    }
    Ok(HeadCache { z, alpha, pre: pre_all })
}

fn gat_forward<T: Real>(
    h: &Tensor<T>,
    batch: &GraphBatch<T>,
    heads: &[GatHead<T>],
    concat: bool,
) -> Result<(Tensor<T>, Vec<HeadCache<T>>), GnnError> {
    if heads.is_empty() {
        return Err(GnnError::ShapeMismatch("GAT layer without heads".into()));
    }
    let n = h.rows();
    let f = heads[0].weight.cols();
    let width = if concat { f * heads.len() } else { f };
    let mut out = Tensor::zeros(&[n, width]);
    let scale = T::one() / T::from_f64(heads.len() as f64);
    let mut caches = Vec::with_capacity(heads.len());
    for (k, head) in heads.iter().enumerate() {
        if head.weight.cols() != f {
            return Err(GnnError::ShapeMismatch("GAT heads differ in width".into()));
        }
        let c = gat_head(h, batch, head)?;
        for v in 0..n {
            let (dst, weight) = if concat {
                (&mut out.row_mut(v)[k * f..(k + 1) * f], T::one())
            } else {
                (out.row_mut(v), scale)
            };
            for (&(u, _), &a) in batch.norm_adj[v].iter().zip(&c.alpha[v]) {
                axpy(weight * a, c.z.row(u), dst);
            }
        }
        caches.push(c);
    }
    Ok((relu(out), caches))
}

/// Multi-head attention layer: per head `Σ_u α_vu W_k h_u` over the
/// neighbors plus self, heads concatenated or averaged, then ReLU.
pub fn gat_layer<T: Real>(
    h: &Tensor<T>,
    batch: &GraphBatch<T>,
    heads: &[GatHead<T>],
    concat: bool,
) -> Result<Tensor<T>, GnnError> {
    check_rows(h, batch)?;
    Ok(gat_forward(h, batch, heads, concat)?.0)
}

fn gin_forward<T: Real>(
    h: &Tensor<T>,
    batch: &GraphBatch<T>,
    mlp: &GinMlp<T>,
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>), GnnError> {
    let mut agg = batch.neighbor_sum(h);
    let self_w = T::one() + eps;
    for (a, &x) in agg.data_mut().iter_mut().zip(h.data()) {
        *a += self_w * x;
    }
    if mlp.b1.len() != mlp.w1.cols() || mlp.b2.len() != mlp.w2.cols() {
        return Err(GnnError::ShapeMismatch("GIN bias width".into()));
    }
    let mut m1 = agg.matmul(&mlp.w1)?;
    m1.add_row_vector(&mlp.b1);
    let hidden = relu(m1.clone());
    let mut out = hidden.matmul(&mlp.w2)?;
    out.add_row_vector(&mlp.b2);
    Ok((out, agg, m1, hidden))
}

/// `MLP((1 + ε) h_v + Σ_{u ∈ N(v)} h_u)`.
pub fn gin_layer<T: Real>(h: &Tensor<T>, batch: &GraphBatch<T>, mlp: &GinMlp<T>, eps: T) -> Result<Tensor<T>, GnnError> {
    check_rows(h, batch)?;
    Ok(gin_forward(h, batch, mlp, eps)?.0)
}

impl<T: Real> Layer<T> {
    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Gcn { weight } => weight.cols(),
            Layer::Gat { heads, concat } => heads[0].weight.cols() * if *concat { heads.len() } else { 1 },
            Layer::Gin { mlp, .. } => mlp.w2.cols(),
        }
    }

    pub fn forward(&self, h: &Tensor<T>, batch: &GraphBatch<T>) -> Result<Tensor<T>, GnnError> {
        Ok(self.forward_cached(h, batch)?.0)
    }

    pub(crate) fn forward_cached(&self, h: &Tensor<T>, batch: &GraphBatch<T>) -> Result<(Tensor<T>, LayerCache<T>), GnnError> {
        check_rows(h, batch)?;
        match self {
            Layer::Gcn { weight } => {
                let out = gcn_layer(h, batch, weight)?;
                let cache = LayerCache::Gcn {
                    input: h.clone(),
                    output: out.clone(),
                };
                Ok((out, cache))
            }
            Layer::Gat { heads, concat } => {
                let (out, caches) = gat_forward(h, batch, heads, *concat)?;
                let cache = LayerCache::Gat {
                    input: h.clone(),
                    heads: caches,
                    output: out.clone(),
                };
                Ok((out, cache))
            }
            Layer::Gin { mlp, eps } => {
                let (out, agg, m1, hidden) = gin_forward(h, batch, mlp, eps.data()[0])?;
                let cache = LayerCache::Gin {
                    input: h.clone(),
                    agg,
                    m1,
                    hidden,
                };
                Ok((out, cache))
            }
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache<T>,
        batch: &GraphBatch<T>,
        d_out: &Tensor<T>,
        grad: &mut Layer<T>,
    ) -> Tensor<T> {
        match (self, cache, grad) {
            (Layer::Gcn { weight }, LayerCache::Gcn { input, output }, Layer::Gcn { weight: gw }) => {
                let d_z = batch.propagate(&relu_back(d_out, output));
                gw.add_assign(&input.t_matmul(&d_z));
                d_z.matmul_t(weight)
            }
            (Layer::Gat { heads, concat }, LayerCache::Gat { input, heads: hc, output }, Layer::Gat { heads: gh, .. }) => {
                let d_y = relu_back(d_out, output);
                let mut d_h = Tensor::zeros(input.shape());
                for (k, ((head, c), g)) in heads.iter().zip(hc).zip(gh.iter_mut()).enumerate() {
                    let d_z = gat_head_backward(head, c, batch, &d_y, heads.len(), *concat, k, g);
                    g.weight.add_assign(&input.t_matmul(&d_z));
                    d_h.add_assign(&d_z.matmul_t(&head.weight));
                }
                d_h
            }
            (Layer::Gin { mlp, eps }, LayerCache::Gin { input, agg, m1, hidden }, Layer::Gin { mlp: gm, eps: ge }) => {
                gm.w2.add_assign(&hidden.t_matmul(d_out));
                gm.b2.add_assign(&d_out.column_sums());
                let d_m1 = relu_back(&d_out.matmul_t(&mlp.w2), m1);
                gm.w1.add_assign(&agg.t_matmul(&d_m1));
                gm.b1.add_assign(&d_m1.column_sums());
                let d_agg = d_m1.matmul_t(&mlp.w1);
                ge.data_mut()[0] += dot(d_agg.data(), input.data());
                let mut d_h = batch.neighbor_sum(&d_agg);
                axpy(T::one() + eps.data()[0], d_agg.data(), d_h.data_mut());
                d_h
            }
            _ => unreachable!("layer, cache, and gradient kinds always agree"),
        }
    }
}

impl<T: Real> LayerCache<T> {
    /// Appends the side of every ReLU / LeakyReLU taken in this layer.
    pub(crate) fn push_pattern(&self, out: &mut Vec<bool>) {
        let positive = |t: &Tensor<T>, out: &mut Vec<bool>| out.extend(t.data().iter().map(|&v| v > T::zero()));
        match self {
            LayerCache::Gcn { output, .. } => positive(output, out),
            LayerCache::Gat { heads, output, .. } => {
                for h in heads {
                    out.extend(h.pre.iter().flatten().map(|&v| v > T::zero()));
                }
                positive(output, out);
            }
            LayerCache::Gin { m1, .. } => positive(m1, out),
        }
    }
}

/// Backward through one attention head; returns `dZ` and accumulates the
/// attention-vector gradient.
#[allow(clippy::too_many_arguments)]
fn gat_head_backward<T: Real>(
    head: &GatHead<T>,
    c: &HeadCache<T>,
    batch: &GraphBatch<T>,
    d_y: &Tensor<T>,
    num_heads: usize,
    concat: bool,
    k: usize,
    grad: &mut GatHead<T>,
) -> Tensor<T> {
    let n = c.z.rows();
    let f = c.z.cols();
    let scale = if concat { T::one() } else { T::one() / T::from_f64(num_heads as f64) };
    let slope = T::from_f64(LEAKY_SLOPE);
    let mut d_z = Tensor::zeros(&[n, f]);
    let mut ds_dst = vec![T::zero(); n];
    let mut ds_src = vec![T::zero(); n];
    let mut g = vec![T::zero(); f];
    for v in 0..n {
        let src = if concat { &d_y.row(v)[k * f..(k + 1) * f] } else { d_y.row(v) };
        for (gi, &s) in g.iter_mut().zip(src) {
            *gi = s * scale;
        }
        let cols = &batch.norm_adj[v];
        let alpha = &c.alpha[v];
        let d_alpha: Vec<T> = cols.iter().map(|&(u, _)| dot(&g, c.z.row(u))).collect();
        for (&(u, _), &a) in cols.iter().zip(alpha) {
            axpy(a, &g, d_z.row_mut(u));
        }
        let weighted: T = alpha.iter().zip(&d_alpha).map(|(&a, &d)| a * d).sum();
        for (j, &(u, _)) in cols.iter().enumerate() {
            let d_e = alpha[j] * (d_alpha[j] - weighted);
            let d_pre = if c.pre[v][j] > T::zero() { d_e } else { d_e * slope };
            ds_dst[v] += d_pre;
            ds_src[u] += d_pre;
        }
    }
    let (a_dst, a_src) = head.attention.data().split_at(f);
    let (ga_dst, ga_src) = grad.attention.data_mut().split_at_mut(f);
    for v in 0..n {
        let zv = c.z.row(v).to_vec();
        axpy(ds_dst[v], &zv, ga_dst);
        axpy(ds_src[v], &zv, ga_src);
        let row = d_z.row_mut(v);
        axpy(ds_dst[v], a_dst, row);
        axpy(ds_src[v], a_src, row);
    }
    d_z
}
