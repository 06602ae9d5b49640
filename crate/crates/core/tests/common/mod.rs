//! Independent reference implementations used by integration and
//! acceptance tests. Everything here is written as plain per-node loops over
//! dense matrices and shares no code with the library kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tguard_core::gnn::{GatHead, GinMlp, GnnConfig, GnnModel, GraphBatch, Tensor};

pub type Mat = Vec<Vec<f64>>;

pub struct RandomGraph {
    pub n: usize,
    pub feats: Mat,
    pub edges: Vec<(usize, usize)>,
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> RandomGraph {
    let feats = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen_bool(0.25) {
                edges.push((s, d));
            }
        }
    }
    RandomGraph { n, feats, edges }
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    (0..r).map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

pub fn to_tensor(m: &Mat) -> Tensor<f64> {
    let c = m.first().map_or(0, Vec::len);
    Tensor::from_vec(&[m.len(), c], m.iter().flatten().copied().collect()).unwrap()
}

pub fn vec_tensor(v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
}

pub fn batch_of(graphs: &[&RandomGraph]) -> GraphBatch<f64> {
    let mut rows = Vec::new();
    let mut offsets = vec![0];
    let mut edges = Vec::new();
    for g in graphs {
        let base = *offsets.last().unwrap();
        rows.extend(g.feats.iter().cloned());
        edges.extend(g.edges.iter().map(|&(s, d)| (s + base, d + base)));
        offsets.push(base + g.n);
    }
    GraphBatch::from_parts(to_tensor(&rows), offsets, edges).unwrap()
}

/// Symmetric adjacency without self-loops.
pub fn dense_adj(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; n]; n];
    for &(s, d) in edges {
        if s != d {
            a[s][d] = true;
            a[d][s] = true;
        }
    }
    a
}

pub fn mat_vec_row(h: &[f64], w: &Mat) -> Vec<f64> {
    let cols = w[0].len();
    (0..cols).map(|j| (0..h.len()).map(|k| h[k] * w[k][j]).sum()).collect()
}

pub fn gcn_oracle(g: &RandomGraph, w: &Mat) -> Mat {
    let a = dense_adj(g.n, &g.edges);
    let deg: Vec<f64> = (0..g.n).map(|v| 1.0 + a[v].iter().filter(|&&x| x).count() as f64).collect();
    (0..g.n)
        .map(|v| {
            let mut acc = vec![0.0; w[0].len()];
            for u in 0..g.n {
                if u == v || a[v][u] {
                    let norm = 1.0 / (deg[v] * deg[u]).sqrt();
                    for (o, x) in acc.iter_mut().zip(mat_vec_row(&g.feats[u], w)) {
                        *o += norm * x;
                    }
                }
            }
            acc.into_iter().map(|x| x.max(0.0)).collect()
        })
        .collect()
}

pub struct OracleHead {
    pub w: Mat,
    pub a: Vec<f64>,
}

pub fn gat_alpha_oracle(g: &RandomGraph, head: &OracleHead) -> Vec<Vec<(usize, f64)>> {
    let adj = dense_adj(g.n, &g.edges);
    let z: Mat = g.feats.iter().map(|h| mat_vec_row(h, &head.w)).collect();
    let f = head.w[0].len();
    (0..g.n)
        .map(|v| {
            let mut scores = Vec::new();
            for u in 0..g.n {
                if u == v || adj[v][u] {
                    let mut e = 0.0;
                    for j in 0..f {
                        e += head.a[j] * z[v][j] + head.a[f + j] * z[u][j];
                    }
                    let e = if e > 0.0 { e } else { 0.2 * e };
                    scores.push((u, e));
                }
            }
            let total: f64 = scores.iter().map(|&(_, e)| e.exp()).sum();
            scores.into_iter().map(|(u, e)| (u, e.exp() / total)).collect()
        })
        .collect()
}

pub fn gat_oracle(g: &RandomGraph, heads: &[OracleHead], concat: bool) -> Mat {
    let f = heads[0].w[0].len();
    let k = heads.len();
    let width = if concat { f * k } else { f };
    let mut out = vec![vec![0.0; width]; g.n];
    for (hi, head) in heads.iter().enumerate() {
        let alpha = gat_alpha_oracle(g, head);
        for v in 0..g.n {
            for &(u, a) in &alpha[v] {
                let z = mat_vec_row(&g.feats[u], &head.w);
                for j in 0..f {
                    if concat {
                        out[v][hi * f + j] += a * z[j];
                    } else {
                        out[v][j] += a * z[j] / k as f64;
                    }
                }
            }
        }
    }
    out.into_iter().map(|r| r.into_iter().map(|x| x.max(0.0)).collect()).collect()
}

pub struct OracleMlp {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

pub fn gin_oracle(g: &RandomGraph, mlp: &OracleMlp, eps: f64) -> Mat {
    let adj = dense_adj(g.n, &g.edges);
    (0..g.n)
        .map(|v| {
            let mut agg: Vec<f64> = g.feats[v].iter().map(|x| (1.0 + eps) * x).collect();
            for u in 0..g.n {
                if adj[v][u] {
                    for (a, x) in agg.iter_mut().zip(&g.feats[u]) {
                        *a += x;
                    }
                }
            }
            let hidden: Vec<f64> = mat_vec_row(&agg, &mlp.w1)
                .into_iter()
                .zip(&mlp.b1)
                .map(|(x, b)| (x + b).max(0.0))
                .collect();
            mat_vec_row(&hidden, &mlp.w2).into_iter().zip(&mlp.b2).map(|(x, b)| x + b).collect()
        })
        .collect()
}

/// Kept node ids per the scoring rule, by an explicit full sort.
pub fn topk_oracle(feats: &Mat, p: &[f64], ratio: f64) -> Vec<usize> {
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = feats
        .iter()
        .enumerate()
        .map(|(v, h)| (h.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / norm, v))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let k = ((ratio * feats.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut kept: Vec<usize> = scored[..k].iter().map(|&(_, v)| v).collect();
    kept.sort();
    kept
}

pub fn max_abs_diff(a: &Mat, b: &Tensor<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            worst = worst.max((x - b.at(i, j)).abs());
        }
    }
    worst
}

pub fn gat_heads(rng: &mut ChaCha8Rng, k: usize, d_in: usize, f: usize) -> (Vec<OracleHead>, Vec<GatHead<f64>>) {
    let oracle: Vec<OracleHead> = (0..k)
        .map(|_| OracleHead {
            w: random_mat(rng, d_in, f),
            a: (0..2 * f).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let lib = oracle
        .iter()
        .map(|h| GatHead {
            weight: to_tensor(&h.w),
            attention: vec_tensor(&h.a),
        })
        .collect();
    (oracle, lib)
}

pub fn gin_mlp(rng: &mut ChaCha8Rng, d_in: usize, hidden: usize) -> (OracleMlp, GinMlp<f64>) {
    let o = OracleMlp {
        w1: random_mat(rng, d_in, hidden),
        b1: (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        w2: random_mat(rng, hidden, hidden),
        b2: (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    let lib = GinMlp {
        w1: to_tensor(&o.w1),
        b1: vec_tensor(&o.b1),
        w2: to_tensor(&o.w2),
        b2: vec_tensor(&o.b2),
    };
    (o, lib)
}

pub struct GradReport {
    /// Largest relative error over elements whose stencil stays on one
    /// smooth piece, with a description of where.
    pub worst: f64,
    pub at: String,
    pub checked: usize,
    /// Elements whose `±step` stencil crosses a ReLU, max, or top-k
    /// boundary; these are rechecked with the first of `RECHECK_STEPS`
    /// whose stencil stays on one piece.
    pub straddling: usize,
    /// Straddling elements whose small stencil still crosses a boundary.
    pub unverified: usize,
}

/// Smallest gradient magnitude a central difference with step `h` can
/// resolve to 1e-4 relative accuracy. A forward pass accumulates rounding
/// of a few dozen ulps of the loss, so the difference quotient carries noise
/// of about `64 ε |L| / h`; below `1e4` times that, relative error measures
/// rounding rather than the gradient.
pub fn denominator_floor(loss: f64, h: f64) -> f64 {
    1e4 * 64.0 * f64::EPSILON * loss.abs().max(1.0) / h
}

pub const RECHECK_STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

/// Compares analytic gradients with central differences for every
/// parameter element.
pub fn gradient_check(model: &GnnModel<f64>, batch: &GraphBatch<f64>, labels: &[u8], step: f64) -> GradReport {
    let (_, grad) = model.loss_and_gradients(batch, labels, None).unwrap();
    let analytic: Vec<(String, Vec<f64>)> =
        grad.params().into_iter().map(|(n, t)| (n, t.data().to_vec())).collect();
    let loss_at = |m: &GnnModel<f64>| m.loss_and_gradients(batch, labels, None).unwrap().0;
    let center = model.branch_pattern(batch).unwrap();
    let base_loss = loss_at(model);
    let mut report = GradReport {
        worst: 0.0,
        at: String::new(),
        checked: 0,
        straddling: 0,
        unverified: 0,
    };
    let mut probe = model.clone();
    // Central difference plus whether both ends stay on the center's piece.
    let mut central = |pi: usize, j: usize, h: f64| {
        let orig = probe.params_mut()[pi].data()[j];
        probe.params_mut()[pi].data_mut()[j] = orig + h;
        let up = loss_at(&probe);
        let smooth_up = probe.branch_pattern(batch).unwrap() == center;
        probe.params_mut()[pi].data_mut()[j] = orig - h;
        let down = loss_at(&probe);
        let smooth_down = probe.branch_pattern(batch).unwrap() == center;
        probe.params_mut()[pi].data_mut()[j] = orig;
        ((up - down) / (2.0 * h), smooth_up && smooth_down)
    };
    for (pi, (name, a)) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let (mut numeric, smooth) = central(pi, j, step);
            let mut used = step;
            if !smooth {
                report.straddling += 1;
                match RECHECK_STEPS.iter().map(|&h| (h, central(pi, j, h))).find(|&(_, (_, ok))| ok) {
                    Some((h, (n2, _))) => {
                        numeric = n2;
                        used = h;
                    }
                    None => {
                        report.unverified += 1;
                        continue;
                    }
                }
            }
            report.checked += 1;
            let denom = a[j].abs().max(numeric.abs()).max(denominator_floor(base_loss, used));
            let rel = (a[j] - numeric).abs() / denom;
            if rel > report.worst {
                report.worst = rel;
                report.at = format!("{name}[{j}] analytic {} numeric {numeric}", a[j]);
            }
        }
    }
    report
}

pub fn small_config(arch: tguard_core::gnn::Arch, layers: usize, seed: u64) -> GnnConfig {
    GnnConfig {
        arch,
        num_layers: layers,
        hidden_units: 8,
        seed,
        ..GnnConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every injected entry of `corpus` must re-parse, re-flatten, and yield a
/// graph holding its inserted signals and every label of its clean source.
/// Returns the number of injected designs checked and the violations found.
pub fn injection_violations(corpus: &tguard_core::inject::Corpus) -> (usize, Vec<String>) {
    use std::collections::BTreeSet;
    use tguard_core::dfg::build_graph;
    use tguard_core::verilog::{flatten, parse, SourceUnit};

    let labels = |text: &str, top: &str| -> Result<BTreeSet<String>, String> {
        let ast = parse(&SourceUnit::single("d.v", text, top)).map_err(|e| e.to_string())?;
        let flat = flatten(&ast, top).map_err(|e| e.to_string())?;
        let g = build_graph(&flat).map_err(|e| e.to_string())?;
        Ok(g.nodes.into_iter().map(|n| n.label).collect())
    };
    let m = &corpus.manifest;
    let mut bad = Vec::new();
    let mut checked = 0;
    for e in m.entries.iter().filter(|e| e.label == 1) {
        checked += 1;
        let got = match labels(corpus.text(&e.path).unwrap_or_default(), &e.top) {
            Ok(l) => l,
            Err(err) => {
                bad.push(format!("{}: {err}", e.design));
                continue;
            }
        };
        for name in e.params["inserted"].as_array().into_iter().flatten().filter_map(|v| v.as_str()) {
            if !got.iter().any(|l| l == name || l.ends_with(&format!(".{name}"))) {
                bad.push(format!("{}: inserted `{name}` missing from graph", e.design));
            }
        }
        let Some(clean) = m
            .entries
            .iter()
            .find(|c| c.label == 0 && e.design.strip_prefix(c.design.as_str()).is_some_and(|r| r.starts_with("_t")))
        else {
            bad.push(format!("{}: no clean source in manifest", e.design));
            continue;
        };
        let before = labels(corpus.text(&clean.path).unwrap_or_default(), &clean.top).unwrap_or_default();
        let lost: Vec<&String> = before.difference(&got).collect();
        if !lost.is_empty() {
            bad.push(format!("{}: lost clean labels {lost:?}", e.design));
        }
    }
    (checked, bad)
}

pub fn clean_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../designs/clean")
}

const BINARY: [&str; 15] = ["&", "|", "^", "~^", "+", "-", "*", "<<", ">>", "<", ">", "<=", ">=", "==", "!="];
const UNARY: [&str; 6] = ["~", "!", "-", "&", "|", "^"];

fn random_expr(r: &mut ChaCha8Rng, names: &[String], depth: usize) -> String {
    let leaf = depth == 0 || r.gen_bool(0.25);
    if leaf {
        let n = &names[r.gen_range(0..names.len())];
        return match r.gen_range(0..10) {
            0 => format!("8'd{}", r.gen_range(0..256)),
            1 => format!("{n}[{}]", r.gen_range(0..8)),
            2 => {
                let hi = r.gen_range(1..8);
                format!("{n}[{hi}:{}]", r.gen_range(0..hi))
            }
            _ => n.clone(),
        };
    }
    let sub = |r: &mut ChaCha8Rng| random_expr(r, names, depth - 1);
    match r.gen_range(0..10) {
        0 => format!("{}({})", UNARY[r.gen_range(0..UNARY.len())], sub(r)),
        1 => format!("({} ? {} : {})", sub(r), sub(r), sub(r)),
        2 => format!("{{{}, {}}}", sub(r), sub(r)),
        3 => format!("({} << {})", sub(r), r.gen_range(1..4)),
        _ => format!("({} {} {})", sub(r), BINARY[r.gen_range(0..BINARY.len())], sub(r)),
    }
}

/// A random two-module design over the supported Verilog subset: a leaf
/// module instantiated twice, continuous assigns, a clocked register with
/// reset and enable, and a combinational case. Top module is `top`.
pub fn random_design(seed: u64) -> String {
    use std::fmt::Write;
    let mut r = rng(seed);
    let leaf_names = vec!["a".to_string(), "b".to_string()];
    let mut s = String::new();
    writeln!(s, "module leaf(input [7:0] a, input [7:0] b, output [7:0] y);").unwrap();
    writeln!(s, "  assign y = {};", random_expr(&mut r, &leaf_names, 2)).unwrap();
    writeln!(s, "endmodule\n").unwrap();

    writeln!(s, "module top(input clk, input rst, input [7:0] x0, input [7:0] x1, input [7:0] x2,").unwrap();
    writeln!(s, "           output [7:0] o0, output [7:0] o1);").unwrap();
    let mut names: Vec<String> = vec!["x0".into(), "x1".into(), "x2".into()];
    let n_wires = r.gen_range(1..5);
    for i in 0..n_wires {
        writeln!(s, "  wire [7:0] w{i};").unwrap();
    }
    writeln!(s, "  wire [7:0] u0y;\n  wire [7:0] u1y;\n  reg [7:0] q;\n  reg [7:0] c;").unwrap();
    for i in 0..n_wires {
        writeln!(s, "  assign w{i} = {};", random_expr(&mut r, &names, 3)).unwrap();
        names.push(format!("w{i}"));
    }
    writeln!(s, "  leaf u0(.a({}), .b({}), .y(u0y));", names[r.gen_range(0..names.len())], names[r.gen_range(0..names.len())]).unwrap();
    writeln!(s, "  leaf u1({}, q, u1y);", names[r.gen_range(0..names.len())]).unwrap();
    names.extend(["u0y".to_string(), "u1y".to_string(), "q".to_string()]);
    writeln!(s, "  always @(posedge clk) begin").unwrap();
    writeln!(s, "    if (rst) q <= 8'h0;").unwrap();
    writeln!(s, "    else if ({}) q <= {};", random_expr(&mut r, &names, 1), random_expr(&mut r, &names, 2)).unwrap();
    writeln!(s, "    else q <= {};", random_expr(&mut r, &names, 2)).unwrap();
    writeln!(s, "  end").unwrap();
    writeln!(s, "  always @(*) begin").unwrap();
    writeln!(s, "    case (x2[1:0])").unwrap();
    for k in 0..3 {
        writeln!(s, "      2'd{k}: c = {};", random_expr(&mut r, &names, 2)).unwrap();
    }
    writeln!(s, "      default: c = {};", random_expr(&mut r, &names, 1)).unwrap();
    writeln!(s, "    endcase\n  end").unwrap();
    names.push("c".into());
    writeln!(s, "  assign o0 = {};", random_expr(&mut r, &names, 3)).unwrap();
    writeln!(s, "  assign o1 = {} ^ c;", random_expr(&mut r, &names, 2)).unwrap();
    s.push_str("endmodule\n");
    s
}

/// A random f32 tensor of 1 to 1,600 elements whose magnitude spans
/// 1e-3 to 1e3. Some draws plant exact grid points and halfway cases.
pub fn random_weights(r: &mut ChaCha8Rng) -> Tensor<f32> {
    let rows = r.gen_range(1..=40);
    let cols = r.gen_range(1..=40);
    let mag = 10f64.powf(r.gen_range(-3.0..3.0));
    let mut data: Vec<f32> = (0..rows * cols).map(|_| (r.gen_range(-1.0..1.0) * mag) as f32).collect();
    if r.gen_bool(0.3) {
        let max = data.iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64;
        for v in data.iter_mut() {
            if !r.gen_bool(0.2) {
                continue;
            }
            let k = r.gen_range(-7..7) as f64 + if r.gen_bool(0.5) { 0.5 } else { 0.0 };
            *v = (k * max / 7.0) as f32;
        }
    }
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

/// Signed codes decoded straight from the packed bytes.
pub fn unpack_codes(packed: &[u8], n: usize) -> Vec<i8> {
    (0..n)
        .map(|i| {
            let nibble = (packed[i / 2] >> (4 * (i % 2))) & 0xf;
            if nibble >= 8 {
                nibble as i8 - 16
            } else {
                nibble as i8
            }
        })
        .collect()
}

/// Float rounding allowance on top of `S/2`: `S` itself is an f32 chosen
/// so that `7S` reproduces the extreme weight, and `code · S` rounds once
/// more, together a few ulps of `S` per unit of code.
pub const HALF_STEP_SLACK_ULPS: f64 = 64.0;

/// Largest `|w − ŵ| − S/2` over unclamped elements, in ulps of `S`.
pub fn half_step_excess(w: &Tensor<f32>, codes: &[i8], scale: f32) -> f64 {
    let s = scale as f64;
    let ulp = s * f32::EPSILON as f64;
    w.data()
        .iter()
        .zip(codes)
        .filter(|(&v, _)| (v as f64 / s) >= -8.0)
        .map(|(&v, &c)| ((v as f64 - (c as f32 * scale) as f64).abs() - s / 2.0) / ulp)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Confusion counts `[[tn, fp], [fn, tp]]` indexed by `[label][prediction]`.
pub fn confusion(preds: &[u8], labels: &[u8]) -> [[usize; 2]; 2] {
    let mut m = [[0usize; 2]; 2];
    for i in 0..preds.len() {
        m[(labels[i] != 0) as usize][(preds[i] != 0) as usize] += 1;
    }
    m
}

/// Checks `got` against counts and rates recomputed from the confusion
/// matrix; F1 uses the count form `2tp / (2tp + fp + fn)`.
pub fn metrics_mismatch(got: &tguard_core::eval::Metrics, preds: &[u8], labels: &[u8]) -> Option<String> {
    let [[tn, fp], [fn_, tp]] = confusion(preds, labels);
    if (got.tp, got.fp, got.tn, got.fn_) != (tp, fp, tn, fn_) {
        return Some(format!("counts {:?} vs {:?}", (got.tp, got.fp, got.tn, got.fn_), (tp, fp, tn, fn_)));
    }
    let total = preds.len();
    let accuracy = if total == 0 { 0.0 } else { (tp + tn) as f64 / total as f64 };
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let f1 = (precision.is_some() && recall.is_some()).then(|| {
        let den = 2 * tp + fp + fn_;
        if den == 0 { 0.0 } else { 2.0 * tp as f64 / den as f64 }
    });
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    };
    if got.accuracy != accuracy || got.precision != precision || got.recall != recall || !close(got.f1, f1) {
        return Some(format!("rates {got:?} vs acc {accuracy} p {precision:?} r {recall:?} f1 {f1:?}"));
    }
    None
}

/// 40 trojan designs followed by 11 clean ones.
pub fn labels_40_11() -> Vec<u8> {
    let mut v = vec![1u8; 40];
    v.extend(vec![0u8; 11]);
    v
}
