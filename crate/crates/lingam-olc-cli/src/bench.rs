//! Repeated simulate, discover and evaluate runs over a grid of cases and sample sizes.

use std::time::Instant;

use lingam_olc::eval::evaluate;
use lingam_olc::seed;
use lingam_olc::simulate::{build_case, sample};
use lingam_olc::{discover, Config};
use rayon::prelude::*;
use serde::Serialize;

pub const FAILED: &str = "failed";

#[derive(Debug, Clone)]
pub struct Plan {
    pub cases: Vec<u32>,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub config: Config,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub directed_f1: f64,
    pub nonadjacent_f1: f64,
    pub rmse: f64,
    pub seconds: f64,
}

/// Extracts one reported quantity from a trial.
pub type Metric = fn(&TrialOutcome) -> f64;

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub case: u32,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub record: CellRecord,
    pub trials: Vec<TrialOutcome>,
}

pub fn trial_seed(master: u64, case: u32, n: usize, trial: usize) -> u64 {
    seed::derive(master, &format!("bench/case{case}/n{n}/trial{trial}"))
}

/// Seeds the model, the sample and the search with the same trial seed.
pub fn run_trial(case: u32, n: usize, trial_seed: u64, base: &Config) -> Result<TrialOutcome, String> {
    let start = Instant::now();
    let spec = build_case(case, trial_seed).map_err(|e| e.to_string())?;
    let data = sample(&spec, n, trial_seed).map_err(|e| e.to_string())?;
    let cfg = Config { seed: trial_seed, ..base.clone() };
    let (graph, _) = discover(&data, &cfg).map_err(|e| e.to_string())?;
    let m = evaluate(&graph, &spec).map_err(|e| e.to_string())?;
    Ok(TrialOutcome {
        directed_f1: m.directed.f1,
        nonadjacent_f1: m.nonadjacent.f1,
        rmse: m.rmse.unwrap_or(f64::NAN),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every trial on a pool of `jobs` threads; cells come back in grid order.
pub fn run(plan: &Plan, jobs: usize) -> Result<Vec<Cell>, String> {
    let mut grid = Vec::new();
    for &case in &plan.cases {
        for &n in &plan.sizes {
            for t in 0..plan.trials {
                grid.push((case, n, trial_seed(plan.seed, case, n, t)));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| e.to_string())?;
    let outcomes: Vec<Result<TrialOutcome, String>> =
        pool.install(|| grid.par_iter().map(|&(case, n, s)| run_trial(case, n, s, &plan.config)).collect());
    let mut cells = Vec::new();
    for (chunk, results) in grid.chunks(plan.trials.max(1)).zip(outcomes.chunks(plan.trials.max(1))) {
        let error = results.iter().find_map(|r| r.as_ref().err().cloned());
        cells.push(Cell {
            record: CellRecord { case: chunk[0].0, n: chunk[0].1, seeds: chunk.iter().map(|c| c.2).collect(), error },
            trials: results.iter().filter_map(|r| r.as_ref().ok().copied()).collect(),
        });
    }
    Ok(cells)
}

/// Population mean and variance; a single value has variance 0.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// One row per case, one column per sample size, cells formatted as `mean (variance)`.
pub fn table(plan: &Plan, cells: &[Cell], metric: impl Fn(&TrialOutcome) -> f64) -> String {
    let mut out = String::from("case");
    for n in &plan.sizes {
        out.push_str(&format!(",N={n}"));
    }
    out.push('\n');
    for &case in &plan.cases {
        out.push_str(&format!("Case {case}"));
        for &n in &plan.sizes {
            let cell = cells.iter().find(|c| c.record.case == case && c.record.n == n);
            let text = match cell {
                Some(c) if c.record.error.is_none() && !c.trials.is_empty() => {
                    let vals: Vec<f64> = c.trials.iter().map(&metric).collect();
                    let (m, v) = mean_variance(&vals);
                    format!("{m:.4} ({v:.4})")
                }
                _ => FAILED.to_string(),
            };
            out.push(',');
            out.push_str(&text);
        }
        out.push('\n');
    }
    out
}
