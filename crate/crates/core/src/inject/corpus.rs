//! Seeded corpus synthesis with a self-checking manifest.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::template::{inject, NamePatterns, TemplateKind, TrojanTemplate};
use super::{payload_targets, InjectError, InjectionRecord};
use crate::dfg::{build_graph, CircuitGraph};
use crate::verilog::{flatten, parse, print_ast, Ast, Instance, Item, SourceUnit};

#[derive(Debug, Clone, PartialEq)]
pub struct CleanDesign {
    pub name: String,
    pub source: SourceUnit,
}

impl CleanDesign {
    /// Every `*.v` file in `dir`, sorted by name; each file's stem is both
    /// the design name and its top module.
    pub fn load_dir(dir: impl AsRef<Path>) -> std::io::Result<Vec<CleanDesign>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "v"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok(CleanDesign {
                    source: SourceUnit::from_paths(&[&p], &stem)?,
                    name: stem,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub design: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub top: String,
    pub label: u8,
    pub template: Option<TemplateKind>,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFailure {
    pub design: String,
    pub template: Option<TemplateKind>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<ManifestFailure>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// (clean, trojan) entry counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let trojan = self.entries.iter().filter(|e| e.label == 1).count();
        (self.entries.len() - trojan, trojan)
    }

    /// Source of one entry, resolved against the manifest directory.
    pub fn source(&self, entry: &ManifestEntry, root: &Path) -> std::io::Result<SourceUnit> {
        SourceUnit::from_paths(&[root.join(&entry.path)], &entry.top)
    }
}

/// A generated dataset: the manifest and the files it names.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub files: Vec<(String, String)>,
}

impl Corpus {
    /// Writes every design plus `manifest.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        for (rel, text) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
        }
        std::fs::write(dir.join("manifest.json"), self.manifest.to_json())
    }

    pub fn text(&self, rel: &str) -> Option<&str> {
        self.files.iter().find(|(p, _)| p == rel).map(|(_, t)| t.as_str())
    }
}

fn unique(name: &str, taken: &mut HashSet<String>) -> String {
    let mut candidate = name.to_string();
    let mut i = 1;
    while taken.contains(&candidate) {
        candidate = format!("{name}_{i}");
        i += 1;
    }
    taken.insert(candidate.clone());
    candidate
}

/// Modules reachable from `top` by instantiation, top first.
fn reachable_modules(ast: &Ast, top: &str) -> Vec<String> {
    let mut order = vec![top.to_string()];
    let mut i = 0;
    while i < order.len() {
        if let Some(m) = ast.module(&order[i]) {
            for item in &m.items {
                if let Item::Instance(Instance { module, .. }) = item {
                    if !order.contains(module) {
                        order.push(module.clone());
                    }
                }
            }
        }
        i += 1;
    }
    order
}

/// True when a graph label names `signal`, possibly under an instance prefix.
pub(crate) fn label_names(label: &str, signal: &str) -> bool {
    label == signal || label.strip_suffix(signal).is_some_and(|p| p.ends_with('.'))
}

fn self_check(text: &str, top: &str, inserted: &[String]) -> Result<CircuitGraph, InjectError> {
    let src = SourceUnit::single("generated.v", text, top);
    let ast = parse(&src)?;
    let g = build_graph(&flatten(&ast, top)?)?;
    for name in inserted {
        if !g.nodes.iter().any(|n| label_names(&n.label, name)) {
            return Err(InjectError::SelfCheck(format!("`{name}` is not in the data-flow graph")));
        }
    }
    Ok(g)
}

fn sample_template(kind: TemplateKind, rng: &mut ChaCha8Rng) -> TrojanTemplate {
    let mut t = TrojanTemplate::new(kind);
    t.trigger.counter_width = rng.gen_range(8..=16);
    t.trigger.threshold = rng.gen_range(1..(1u64 << t.trigger.counter_width).min(512));
    let n = rng.gen_range(1..=3);
    t.trigger.opcode_watch = (0..n).map(|_| rng.gen_range(0..32)).collect();
    t
}

fn try_variant(
    ast: &Ast,
    design: &str,
    top: &str,
    kind: TemplateKind,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<(String, InjectionRecord, TrojanTemplate), InjectError> {
    let mut modules = reachable_modules(ast, top);
    let start = rng.gen_range(0..modules.len());
    modules.rotate_left(start);
    let template = sample_template(kind, rng);
    let mut last = InjectError::NoClockFound(top.to_string());
    for module in &modules {
        let mut t = template.clone();
        let (triggered, info) = match super::inject_trigger(ast, &t, module) {
            Ok(v) => v,
            Err(e) => {
                last = e;
                continue;
            }
        };
        let targets = payload_targets(&triggered, kind, &info, &NamePatterns::default());
        let Some(target) = targets.choose(rng) else {
            last = InjectError::TargetNotFound(format!("<{kind} in {module}>"));
            continue;
        };
        t.trigger.watch_signal = Some(info.watch_signal.clone());
        t.payload.target_signal = Some(target.clone());
        match inject(ast, design, &t, module, seed).and_then(|(out, rec)| {
            let text = print_ast(&out);
            self_check(&text, top, &rec.inserted)?;
            Ok((text, rec))
        }) {
            Ok((text, rec)) => return Ok((text, rec, t)),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Emits a pretty-printed clean copy (label 0) of every design and
/// `n_variants` infected variants (label 1), assigned round-robin over the
/// designs that parse and over `templates`. Variant parameters, insertion
/// module, and payload target all come from `seed`. A design or variant that
/// fails is recorded in `failures` instead of aborting the run.
pub fn generate_corpus(designs: &[CleanDesign], templates: &[TemplateKind], n_variants: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = HashSet::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    let mut parsed: Vec<(String, String, Ast)> = Vec::new();

    for d in designs {
        let top = d.source.top_module.clone();
        let checked = parse(&d.source).map_err(InjectError::from).and_then(|ast| {
            let text = print_ast(&ast);
            self_check(&text, &top, &[])?;
            Ok((ast, text))
        });
        match checked {
            Ok((ast, text)) => {
                let name = unique(&d.name, &mut taken);
                let path = format!("clean/{name}.v");
                files.push((path.clone(), text));
                entries.push(ManifestEntry {
                    design: name.clone(),
                    path,
                    top: top.clone(),
                    label: 0,
                    template: None,
                    params: json!({}),
                });
                parsed.push((name, top, ast));
            }
            Err(e) => failures.push(ManifestFailure {
                design: d.name.clone(),
                template: None,
                error: e.to_string(),
            }),
        }
    }

    if !parsed.is_empty() && !templates.is_empty() {
        for i in 0..n_variants {
            let (name, top, ast) = &parsed[i % parsed.len()];
            let kind = templates[i % templates.len()];
            match try_variant(ast, name, top, kind, &mut rng, seed) {
                Ok((text, rec, t)) => {
                    let design = unique(&format!("{name}_t{i:02}"), &mut taken);
                    let path = format!("trojan/{design}.v");
                    let value = (kind == TemplateKind::DenialOfService)
                        .then(|| format!("0x{:08x}", t.payload.malicious_value.unwrap_or(super::EBREAK)));
                    let params = json!({
                        "module": rec.module,
                        "counter_width": t.trigger.counter_width,
                        "threshold": t.trigger.threshold,
                        "opcode_watch": rec.trigger.opcode_watch,
                        "watch_signal": rec.trigger.watch_signal,
                        "watch_slice": [rec.trigger.watch_slice.0, rec.trigger.watch_slice.1],
                        "target_signal": rec.target,
                        "secret_signal": rec.secret,
                        "malicious_value": value,
                        "inserted": rec.inserted,
                    });
                    files.push((path.clone(), text));
                    entries.push(ManifestEntry {
                        design,
                        path,
                        top: top.clone(),
                        label: 1,
                        template: Some(kind),
                        params,
                    });
                }
                Err(e) => failures.push(ManifestFailure {
                    design: name.clone(),
                    template: Some(kind),
                    error: e.to_string(),
                }),
            }
        }
    }

    Corpus {
        manifest: DatasetManifest {
            seed,
            entries,
            failures,
        },
        files,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CPU: &str = "\
module alu(input [7:0] a, input [7:0] b, output [7:0] y);
  assign y = a + b;
endmodule
module cpu(input clk, input rst_n, input [15:0] IDATA, output reg [7:0] r);
  wire [7:0] s;
  alu u_alu(.a(IDATA[7:0]), .b(r), .y(s));
  always @(posedge clk) begin
    if (!rst_n) r <= 8'h0;
    else r <= s;
  end
endmodule
";

    fn designs() -> Vec<CleanDesign> {
        vec![
            CleanDesign {
                name: "cpu".into(),
                source: SourceUnit::single("cpu.v", CPU, "cpu"),
            },
            CleanDesign {
                name: "bad".into(),
                source: SourceUnit::single("bad.v", "module bad(; endmodule", "bad"),
            },
        ]
    }

    #[test]
    fn zero_variants_is_clean_only() {
        let c = generate_corpus(&designs(), &TemplateKind::ALL, 0, 1);
        assert_eq!(c.manifest.class_counts(), (1, 0));
        assert_eq!(c.manifest.failures.len(), 1);
        assert!(c.manifest.entries.iter().all(|e| e.label == 0 && e.template.is_none()));
    }

    #[test]
    fn every_template_applies() {
        let c = generate_corpus(&designs(), &TemplateKind::ALL, 8, 3);
        assert!(c.manifest.failures.iter().all(|f| f.template.is_none()), "{:?}", c.manifest.failures);
        assert_eq!(c.manifest.class_counts(), (1, 8));
        for e in &c.manifest.entries {
            assert_eq!(e.label == 1, e.template.is_some());
            let text = c.text(&e.path).unwrap();
            assert!(parse(&SourceUnit::single("x.v", text, &e.top)).is_ok());
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_corpus(&designs(), &TemplateKind::ALL, 6, 9);
        let b = generate_corpus(&designs(), &TemplateKind::ALL, 6, 9);
        assert_eq!(a, b);
        assert_eq!(a.manifest.to_json(), b.manifest.to_json());
    }

    #[test]
    fn manifest_round_trips() {
        let c = generate_corpus(&designs(), &TemplateKind::ALL, 2, 5);
        let back = DatasetManifest::from_json(&c.manifest.to_json()).unwrap();
        assert_eq!(back, c.manifest);
        let v: serde_json::Value = serde_json::from_str(&c.manifest.to_json()).unwrap();
        assert_eq!(v["seed"], 5);
        assert_eq!(v["entries"][1]["template"], "DenialOfService");
        assert_eq!(v["entries"][2]["template"], "InfoLeak");
    }

    #[test]
    fn duplicate_names_get_suffixes() {
        let mut d = designs();
        d[1] = d[0].clone();
        let c = generate_corpus(&d, &TemplateKind::ALL, 0, 1);
        let names: Vec<_> = c.manifest.entries.iter().map(|e| e.design.as_str()).collect();
        assert_eq!(names, vec!["cpu", "cpu_1"]);
    }

    #[test]
    fn label_suffix_match() {
        assert!(label_names("Trojan_Counter", "Trojan_Counter"));
        assert!(label_names("u_alu.Trojan_Counter", "Trojan_Counter"));
        assert!(!label_names("xTrojan_Counter", "Trojan_Counter"));
    }
}
