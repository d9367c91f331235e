use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lingam_olc::cumulants::{joint_cumulant, kstat_with_se, CumulantIndex, PairMoments};
use lingam_olc::discovery::discover_detailed;
use lingam_olc::eval::evaluate;
use lingam_olc::simulate::{build_case, ground_truth_mixing, random_model, sample};
use lingam_olc::{CausalGraph, Config, MixingMatrix, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::bench::{self, Plan};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, read_csv, read_text, write_csv, write_json, write_text, RunManifest};

/// Everything the evaluator needs about a simulated model.
#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub spec: ModelSpec,
    pub graph: CausalGraph,
    pub mixing: MixingMatrix,
    pub ancestors: BTreeMap<String, Vec<String>>,
}

pub enum ModelChoice {
    Case(u32),
    Random { p: usize, latents: usize, density: f64 },
}

pub fn simulate(model: ModelChoice, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    let spec = match model {
        ModelChoice::Case(c) => build_case(c, seed)?,
        ModelChoice::Random { p, latents, density } => random_model(p, latents, density, seed)?,
    };
    let data = sample(&spec, n, seed)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("simulate");
    manifest.seed = Some(seed);
    let data_path = out.join("data.csv");
    write_csv(&data_path, &data)?;
    let truth = Truth {
        graph: spec.truth_graph(),
        mixing: ground_truth_mixing(&spec),
        ancestors: spec.ancestors(),
        spec,
    };
    let truth_path = out.join("truth.json");
    write_json(&truth_path, &truth)?;
    manifest.output(&data_path);
    manifest.output(&truth_path);
    manifest.write(out, start.elapsed().as_secs_f64())?;
    println!("wrote {} samples of {} variables to {}", n, data.n_vars(), data_path.display());
    Ok(())
}

pub fn discover(data_path: &Path, cfg: Config, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = read_csv(data_path)?;
    if data.n_vars() < 3 {
        return Err(CliError::Usage(format!(
            "{} has {} columns; discovery needs at least 3",
            data_path.display(),
            data.n_vars()
        )));
    }
    let result = discover_detailed(&data, &cfg)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("discover");
    manifest.input(data_path)?;
    manifest.seed = Some(cfg.seed);
    manifest.config = Some(cfg);
    manifest.details = serde_json::to_value(&result.stats).ok();
    let files = [
        ("graph.json", result.graph.to_json()),
        ("graph.dot", result.graph.to_dot()),
    ];
    for (name, text) in files {
        let p = out.join(name);
        write_text(&p, &text)?;
        manifest.output(&p);
    }
    let mixing_path = out.join("mixing.json");
    write_json(&mixing_path, &result.mixing)?;
    manifest.output(&mixing_path);
    manifest.write(out, start.elapsed().as_secs_f64())?;
    let g = &result.graph;
    println!(
        "{} latents, {} directed, {} undirected edges",
        g.latents.len(),
        g.directed_edges.len(),
        g.undirected_edges.len()
    );
    for w in &g.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn eval(graph_path: &Path, truth_path: &Path, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    let graph = CausalGraph::from_json(&read_text(graph_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", graph_path.display())))?;
    let truth: Truth = serde_json::from_str(&read_text(truth_path)?)
        .map_err(|e| CliError::Input(format!("{}: schema mismatch: {e}", truth_path.display())))?;
    let report = evaluate(&graph, &truth.spec).map_err(|e| CliError::Input(e.to_string()))?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new("eval");
    manifest.input(graph_path)?;
    manifest.input(truth_path)?;
    let path = out.join("metrics.json");
    write_json(&path, &report)?;
    manifest.output(&path);
    manifest.write(out, start.elapsed().as_secs_f64())?;
    println!(
        "directed F1 {:.4}, non-adjacent F1 {:.4}, rmse {}",
        report.directed.f1,
        report.nonadjacent.f1,
        report.rmse.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

/// Joint cumulants of order 2 to 4, or with `pair` two-variable cumulants up to order 6.
pub fn cumulants(data_path: &Path, idx: &[String], pair: bool) -> CliResult<()> {
    let data = read_csv(data_path)?;
    let index = CumulantIndex::from_labels(&data, idx).map_err(|e| match e {
        lingam_olc::Error::LabelMismatch(m) => CliError::Usage(m),
        e => CliError::Usage(format!("{e}; the pair route (--pair) reaches two-variable cumulants up to order 6")),
    })?;
    if pair {
        let mut distinct: Vec<usize> = index.variables.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != 2 || index.order() > 6 {
            return Err(CliError::Usage("--pair needs exactly two distinct variables and order at most 6".into()));
        }
        let a = index.variables.iter().filter(|&&v| v == distinct[0]).count();
        let pm = PairMoments::new(data.column(distinct[0]), data.column(distinct[1]), index.order())?;
        let (value, se) = pm.cumulant_with_se(a, index.order() - a);
        println!("value {value}\nse {se}");
        return Ok(());
    }
    if index.order() > 4 {
        return Err(CliError::Usage(format!(
            "order {} is not supported for joint cumulants; use --pair for two-variable cumulants (the cum_ab route, orders up to 6)",
            index.order()
        )));
    }
    let est = joint_cumulant(&data, &index)?;
    let cols: Vec<&[f64]> = index.variables.iter().map(|&v| data.column(v)).collect();
    let (_, se) = kstat_with_se(&cols)?;
    println!("value {}\nse {se}", est.value);
    if let Some(v) = est.variance_estimate {
        println!("variance {v}");
    }
    Ok(())
}

pub fn bench(plan: Plan, jobs: usize, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    ensure_dir(out)?;
    let cells = bench::run(&plan, jobs).map_err(CliError::Internal)?;
    let mut manifest = RunManifest::new("bench");
    manifest.seed = Some(plan.seed);
    manifest.config = Some(plan.config.clone());
    let tables: [(&str, bench::Metric); 4] = [
        ("directed_f1.csv", |o| o.directed_f1),
        ("nonadjacent_f1.csv", |o| o.nonadjacent_f1),
        ("rmse.csv", |o| o.rmse),
        ("timing.csv", |o| o.seconds),
    ];
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, metric) in tables {
        let p = out.join(name);
        write_text(&p, &bench::table(&plan, &cells, metric))?;
        manifest.output(&p);
        written.push(p);
    }
    for c in &cells {
        if let Some(e) = &c.record.error {
            eprintln!("case {} N={} failed: {e}", c.record.case, c.record.n);
        }
    }
    let records: Vec<_> = cells.iter().map(|c| &c.record).collect();
    manifest.details = serde_json::to_value(&records).ok();
    manifest.write(out, start.elapsed().as_secs_f64())?;
    println!("{}", read_text(&written[0])?.trim_end());
    Ok(())
}
