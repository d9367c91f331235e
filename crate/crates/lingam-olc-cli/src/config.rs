//! `key = value` configuration files layered over the library defaults.

use std::path::Path;

use lingam_olc::Config;

use crate::error::{CliError, CliResult};

pub fn parse(text: &str, mut cfg: Config) -> CliResult<Config> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Input(format!("config line {}: {msg}", i + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        let opt = |v: &str| -> Result<Option<usize>, String> {
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                num(v).map(Some)
            }
        };
        let applied = match key {
            "alpha" => num(value).map(|v| cfg.alpha = v),
            "n_permutations" => num(value).map(|v| cfg.n_permutations = v),
            "subsample_cap" => num(value).map(|v| cfg.subsample_cap = v),
            "degeneracy_multiplier" => num(value).map(|v| cfg.degeneracy_multiplier = v),
            "rank_tol" => num(value).map(|v| cfg.rank_tol = v),
            "seed" => num(value).map(|v| cfg.seed = v),
            "max_rounds" => opt(value).map(|v| cfg.max_rounds = v),
            "bonferroni" => opt(value).map(|v| cfg.bonferroni = v),
            "ratio_scan" => num(value).map(|v| cfg.ratio_scan = v),
            _ => Err(format!("unknown key {key:?}")),
        };
        applied.map_err(bad)?;
    }
    Ok(cfg)
}

pub fn load(path: Option<&Path>) -> CliResult<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            parse(&text, Config::default())
        }
    }
}
