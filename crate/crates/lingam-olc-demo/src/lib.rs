//! Browser bindings: simulate a benchmark case, run discovery on pasted CSV,
//! and estimate the shared-component loadings of a column pair.
//!
//! Each exported function wraps a plain Rust function of the same role so the
//! logic can be tested without a JavaScript host.

use lingam_olc::json::to_canonical_string;
use lingam_olc::mixing::{estimate_pair, EstimationSettings};
use lingam_olc::simulate::{build_case, sample};
use lingam_olc::{discover, Config, Dataset};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest sample the page will simulate or analyse.
pub const MAX_ROWS: usize = 20_000;

pub fn parse_csv(text: &str) -> Result<Dataset, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let labels: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); labels.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| format!("line {}: {field:?} is not a number", row + 2))?;
            columns[j].push(v);
        }
    }
    if columns.first().map_or(0, Vec::len) > MAX_ROWS {
        return Err(format!("at most {MAX_ROWS} rows are supported here"));
    }
    Dataset::new(labels, columns).map_err(|e| e.to_string())
}

pub fn simulate_csv(case: u32, n: usize, seed: u32) -> Result<String, String> {
    if n > MAX_ROWS {
        return Err(format!("at most {MAX_ROWS} rows are supported here"));
    }
    let spec = build_case(case, seed as u64).map_err(|e| e.to_string())?;
    let data = sample(&spec, n, seed as u64).map_err(|e| e.to_string())?;
    let mut out = data.labels().join(",");
    out.push('\n');
    for t in 0..n {
        let row: Vec<String> = data.columns().iter().map(|c| c[t].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Graph JSON and Graphviz text for the discovered structure.
pub fn discover_json(csv_text: &str, seed: u32) -> Result<String, String> {
    let data = parse_csv(csv_text)?;
    let cfg = Config { seed: seed as u64, ..Default::default() };
    let (graph, _) = discover(&data, &cfg).map_err(|e| e.to_string())?;
    let out = json!({ "graph": graph.to_json_value(), "dot": graph.to_dot() });
    Ok(to_canonical_string(&out))
}

pub fn pair_json(csv_text: &str, first: &str, second: &str) -> Result<String, String> {
    let data = parse_csv(csv_text)?;
    let x = data.by_label(first).map_err(|e| e.to_string())?;
    let y = data.by_label(second).map_err(|e| e.to_string())?;
    let est = estimate_pair(x, y, &EstimationSettings::default()).map_err(|e| e.to_string())?;
    let out = json!({
        "alpha_i": est.alpha_i,
        "alpha_j": est.alpha_j,
        "se_i": est.diagnostics.se_alpha_i,
        "se_j": est.diagnostics.se_alpha_j,
        "covariance": est.cum11,
    });
    Ok(to_canonical_string(&out))
}

#[wasm_bindgen(js_name = simulateCase)]
pub fn simulate_case(case: u32, n: usize, seed: u32) -> Result<String, JsError> {
    simulate_csv(case, n, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = discoverCsv)]
pub fn discover_csv(csv_text: &str, seed: u32) -> Result<String, JsError> {
    discover_json(csv_text, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pairLoadings)]
pub fn pair_loadings(csv_text: &str, first: &str, second: &str) -> Result<String, JsError> {
    pair_json(csv_text, first, second).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_text_parses_back() {
        let text = simulate_csv(2, 300, 4).unwrap();
        let data = parse_csv(&text).unwrap();
        assert_eq!(data.labels(), ["X1", "X2", "X3"]);
        assert_eq!(data.n_samples(), 300);
        let spec = build_case(2, 4).unwrap();
        assert_eq!(data, sample(&spec, 300, 4).unwrap());
    }

    #[test]
    fn bad_requests_are_errors() {
        assert!(simulate_csv(11, 100, 0).is_err());
        assert!(simulate_csv(1, MAX_ROWS + 1, 0).is_err());
        assert!(parse_csv("a,b\n1,x\n").unwrap_err().contains("line 2"));
        assert!(discover_json("a,b\n1,2\n", 0).is_err());
    }

    #[test]
    fn discovery_output_has_graph_and_dot() {
        let text = simulate_csv(1, 2000, 3).unwrap();
        let out: serde_json::Value = serde_json::from_str(&discover_json(&text, 3).unwrap()).unwrap();
        assert_eq!(out["graph"]["latents"].as_array().unwrap().len(), 1);
        assert!(out["dot"].as_str().unwrap().starts_with("digraph"));
    }

    #[test]
    fn pair_loadings_match_the_library() {
        for seed in 0..4 {
            let text = simulate_csv(1, 5000, seed).unwrap();
            let data = sample(&build_case(1, seed as u64).unwrap(), 5000, seed as u64).unwrap();
            let lib = estimate_pair(data.column(0), data.column(1), &EstimationSettings::default());
            match (pair_json(&text, "X1", "X2"), lib) {
                (Ok(out), Ok(est)) => {
                    let out: serde_json::Value = serde_json::from_str(&out).unwrap();
                    assert_eq!(out["alpha_i"].as_f64().unwrap(), est.alpha_i);
                    assert_eq!(out["alpha_j"].as_f64().unwrap(), est.alpha_j);
                }
                (Err(msg), Err(e)) => assert_eq!(msg, e.to_string()),
                (a, b) => panic!("demo {a:?} vs library {b:?}"),
            }
        }
        let text = simulate_csv(1, 500, 0).unwrap();
        assert!(pair_json(&text, "X1", "nope").is_err());
    }
}
