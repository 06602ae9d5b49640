//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tguard_core::checkpoint::{checkpoint_size_ratio, Checkpoint};
use tguard_core::dfg::{CircuitGraph, Vocabulary};
use tguard_core::eval::{kfold_plan, make_split, report_from, run_fold, Fractions, Metrics, Mode, Report};
use tguard_core::gnn::{evaluate, predict_proba, train_with, GnnConfig, GnnModel, GraphInput, LabeledGraph};
use tguard_core::inject::{generate_corpus, CleanDesign, TemplateKind};
use tguard_core::quant::quantize_model;
use tguard_core::verilog::SourceUnit;

use crate::data::{
    extract_all, guard_outputs, labeled_graphs, load_manifest, manifest_jobs, read_text, stem, verilog_files,
    write_file, DesignJob,
};
use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub force: bool,
    pub verbose: bool,
}

fn class_name(label: Option<u8>) -> &'static str {
    match label {
        Some(1) => "TjIn",
        Some(_) => "TjFree",
        None => "-",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |v| format!("{v:.3}"))
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "acc {:.3} prec {} rec {} f1 {}",
        m.accuracy,
        fmt_opt(m.precision),
        fmt_opt(m.recall),
        fmt_opt(m.f1)
    )
}

pub fn extract(
    g: &Globals,
    inputs: &[PathBuf],
    top: Option<&str>,
    manifest: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let mut jobs = Vec::new();
    if let Some(m) = manifest {
        let (manifest, root) = load_manifest(m)?;
        jobs.extend(manifest_jobs(&manifest, &root)?);
    }
    for path in verilog_files(inputs)? {
        let name = stem(&path);
        let text = read_text(&path)?;
        jobs.push(DesignJob {
            source: SourceUnit::single(path.display().to_string(), text, top.unwrap_or(&name)),
            name,
            label: None,
        });
    }
    if jobs.is_empty() {
        return Err(CliError::user("no designs given"));
    }
    let targets: Vec<PathBuf> = jobs.iter().map(|j| out.join(format!("{}.graph.json", j.name))).collect();
    guard_outputs(targets.iter().map(PathBuf::as_path), g.force)?;

    let width = jobs.iter().map(|j| j.name.len()).max().unwrap_or(0).max(6);
    out!("{:<width$}  {:<6}  {:>7}  {:>7}  {:>8}", "design", "type", "nodes", "edges", "time(s)");
    let mut failed = Vec::new();
    for ((result, job), target) in extract_all(&jobs).into_iter().zip(&jobs).zip(&targets) {
        match result {
            Ok((graph, stats)) => {
                write_file(target, graph.to_json())?;
                out!(
                    "{:<width$}  {:<6}  {:>7}  {:>7}  {:>8.3}",
                    stats.design,
                    class_name(job.label),
                    stats.nodes,
                    stats.edges,
                    stats.seconds
                );
            }
            Err(e) => failed.push(format!("{}: {e}", job.name)),
        }
    }
    if failed.is_empty() {
        return Ok(());
    }
    for f in &failed {
        eprintln!("skipped {f}");
    }
    Err(CliError::user(format!("{} of {} designs failed", failed.len(), jobs.len())))
}

pub fn inject(g: &Globals, clean: &Path, templates: &[TemplateKind], variants: usize, out: &Path) -> CliResult<()> {
    let manifest_path = out.join("manifest.json");
    guard_outputs([manifest_path.as_path()], g.force)?;
    let designs = CleanDesign::load_dir(clean).map_err(|e| CliError::user(format!("{}: {e}", clean.display())))?;
    if designs.is_empty() {
        return Err(CliError::user(format!("{}: no *.v designs", clean.display())));
    }
    if templates.is_empty() {
        return Err(CliError::user("no templates given"));
    }
    let corpus = generate_corpus(&designs, templates, variants, g.seed);
    corpus
        .write(out)
        .map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;

    let (clean_n, trojan_n) = corpus.manifest.class_counts();
    out!("class 0 (TjFree): {clean_n}");
    out!("class 1 (TjIn):   {trojan_n}");
    for t in templates {
        let n = corpus.manifest.entries.iter().filter(|e| e.template == Some(*t)).count();
        out!("  {t}: {n}");
    }
    out!("total: {}", clean_n + trojan_n);
    for f in &corpus.manifest.failures {
        let t = f.template.map_or_else(|| "-".to_string(), |t| t.to_string());
        eprintln!("failed {} ({t}): {}", f.design, f.error);
    }
    Ok(())
}

fn curve_path(out: &Path) -> PathBuf {
    out.with_file_name(format!("{}.curve.csv", stem(out)))
}

pub fn train(g: &Globals, manifest: &Path, config: GnnConfig, out: &Path) -> CliResult<()> {
    config.validate()?;
    let curve = curve_path(out);
    guard_outputs([out, curve.as_path()], g.force)?;
    let vocab = Vocabulary::standard();
    let graphs = labeled_graphs(manifest, &vocab)?;
    let labels: Vec<u8> = graphs.iter().map(|x| x.label).collect();
    let split = make_split(&labels, Fractions::default(), g.seed)?;
    let pick = |idx: &[usize]| -> Vec<LabeledGraph> { idx.iter().map(|&i| graphs[i].clone()).collect() };
    let (train_set, val_set, test_set) = (pick(&split.train), pick(&split.val), pick(&split.test));
    out!(
        "train {} / val {} / test {} designs, {} {}-layer",
        train_set.len(),
        val_set.len(),
        test_set.len(),
        config.arch,
        config.num_layers
    );

    let model = GnnModel::new(config, vocab_dim(&graphs))?;
    let state = train_with(model, &train_set, &val_set, |r| {
        out!("epoch {:>4}  loss {:.4}  val {}", r.epoch, r.train_loss, metrics_line(&r.metrics));
    })?;
    let test = evaluate(&state.best, &test_set)?;
    out!("best epoch {}  test {}", state.best_epoch, metrics_line(&test));

    write_file(out, Checkpoint::from_model(&state.best, &vocab).to_bytes())?;
    let mut csv = String::from("epoch,train_loss,val_accuracy,val_precision,val_recall,val_f1\n");
    for (i, loss) in state.losses.iter().enumerate() {
        let epoch = i + 1;
        let cols = match state.validation.iter().find(|r| r.epoch == epoch) {
            Some(r) => {
                let o = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
                format!(
                    "{:.6},{},{},{}",
                    r.metrics.accuracy,
                    o(r.metrics.precision),
                    o(r.metrics.recall),
                    o(r.metrics.f1)
                )
            }
            None => ",,,".to_string(),
        };
        writeln!(csv, "{epoch},{loss:.6},{cols}").unwrap();
    }
    write_file(&curve, csv)
}

fn vocab_dim(graphs: &[LabeledGraph]) -> usize {
    graphs.first().map_or(0, |x| x.input.features.cols())
}

fn load_model(ckpt: &Checkpoint) -> CliResult<GnnModel<f32>> {
    Ok(if ckpt.is_quantized() {
        ckpt.to_quantized()?.dequantized().clone()
    } else {
        ckpt.to_model()?
    })
}

pub fn quantize(g: &Globals, input: &Path, out: &Path) -> CliResult<()> {
    guard_outputs([out], g.force)?;
    let fp = Checkpoint::load(input)?;
    if fp.is_quantized() {
        return Err(CliError::user(format!("{} is already quantized", input.display())));
    }
    let q = Checkpoint::from_quantized(&quantize_model(&fp.to_model()?)?, &fp.vocab);
    write_file(out, q.to_bytes())?;
    out!(
        "payload {} -> {} bytes (ratio {:.4})",
        fp.payload_bytes(),
        q.payload_bytes(),
        checkpoint_size_ratio(&fp, &q)?
    );
    Ok(())
}

pub fn eval(
    g: &Globals,
    model: &Path,
    manifest: &Path,
    mode: Mode,
    folds: usize,
    compare: bool,
    out: &Path,
) -> CliResult<()> {
    let csv_out = out.with_extension("csv");
    guard_outputs([out, csv_out.as_path()], g.force)?;
    let ckpt = Checkpoint::load(model)?;
    if compare && ckpt.is_quantized() {
        return Err(CliError::user("--compare needs an f32 checkpoint"));
    }
    let graphs = labeled_graphs(manifest, &ckpt.vocab)?;
    let labels: Vec<u8> = graphs.iter().map(|x| x.label).collect();
    let report = match mode {
        Mode::Holdout => {
            // Score the checkpoint on the test part of the split `train` used.
            let split = make_split(&labels, Fractions::default(), g.seed)?;
            let test: Vec<LabeledGraph> = split.test.iter().map(|&i| graphs[i].clone()).collect();
            let fp = load_model(&ckpt)?;
            let report = Report::new(Mode::Holdout, vec![evaluate(&fp, &test)?], ckpt.config.clone(), g.seed);
            if compare {
                report.with_q4(vec![evaluate(quantize_model(&fp)?.dequantized(), &test)?])
            } else {
                report
            }
        }
        Mode::Kfold => {
            let config = GnnConfig {
                seed: g.seed,
                ..ckpt.config.clone()
            };
            let plans = kfold_plan(&labels, folds, g.seed)?;
            let outcomes = plans
                .par_iter()
                .map(|p| {
                    let o = run_fold(&graphs, p, &config, compare)?;
                    if g.verbose {
                        eprintln!("fold {}: {}", o.fold, metrics_line(&o.fp32));
                    }
                    Ok(o)
                })
                .collect::<CliResult<Vec<_>>>()?;
            report_from(Mode::Kfold, &outcomes, &config)
        }
    };
    let m = &report.mean;
    out!(
        "{} {}: acc {:.3} prec {} rec {} f1 {}",
        report.config.arch,
        report.config.num_layers,
        m.accuracy,
        fmt_opt(m.precision),
        fmt_opt(m.recall),
        fmt_opt(m.f1)
    );
    if let Some(q) = &report.q4 {
        let m = &q.mean;
        out!(
            "{}-q4 {}: acc {:.3} prec {} rec {} f1 {}",
            report.config.arch,
            report.config.num_layers,
            m.accuracy,
            fmt_opt(m.precision),
            fmt_opt(m.recall),
            fmt_opt(m.f1)
        );
    }
    write_file(out, report.to_json())?;
    write_file(&csv_out, report.to_csv())
}

pub fn predict(model: &Path, graphs: &[PathBuf]) -> CliResult<()> {
    let ckpt = Checkpoint::load(model)?;
    let net = load_model(&ckpt)?;
    let mut inputs = Vec::with_capacity(graphs.len());
    for p in graphs {
        let g = CircuitGraph::from_json(&read_text(p)?).map_err(|e| CliError::user(format!("{}: {e}", p.display())))?;
        inputs.push(GraphInput::from_graph(&g, &ckpt.vocab));
    }
    let refs: Vec<&GraphInput> = inputs.iter().collect();
    for (input, p) in inputs.iter().zip(predict_proba(&net, &refs)?) {
        let verdict = if p >= 0.5 { "trojan" } else { "clean" };
        out!("{}, {p:.6}, {verdict}", input.design);
    }
    Ok(())
}
