//! Mixed graph over observed variables and latent confounders.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: String,
    pub to: String,
    pub coef: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEdge {
    pub latent: String,
    pub child: String,
    pub coef: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CausalGraph {
    pub observed: Vec<String>,
    pub latents: Vec<String>,
    pub directed_edges: Vec<DirectedEdge>,
    pub undirected_edges: Vec<[String; 2]>,
    pub latent_edges: Vec<LatentEdge>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CausalGraph {
    pub fn new(observed: Vec<String>) -> Self {
        CausalGraph { observed, ..Default::default() }
    }

    /// Sorts edge lists into canonical order.
    pub fn normalize(&mut self) {
        for e in self.undirected_edges.iter_mut() {
            if e[0] > e[1] {
                e.swap(0, 1);
            }
        }
        self.directed_edges.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        self.directed_edges.dedup_by(|a, b| a.from == b.from && a.to == b.to);
        self.undirected_edges.sort();
        self.undirected_edges.dedup();
        self.latent_edges.sort_by(|a, b| (&a.latent, &a.child).cmp(&(&b.latent, &b.child)));
        self.latent_edges.dedup_by(|a, b| a.latent == b.latent && a.child == b.child);
    }

    pub fn has_directed(&self, from: &str, to: &str) -> bool {
        self.directed_edges.iter().any(|e| e.from == from && e.to == to)
    }

    pub fn has_undirected(&self, a: &str, b: &str) -> bool {
        self.undirected_edges.iter().any(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
    }

    /// True when no directed or undirected edge joins the pair.
    pub fn non_adjacent(&self, a: &str, b: &str) -> bool {
        !self.has_directed(a, b) && !self.has_directed(b, a) && !self.has_undirected(a, b)
    }

    pub fn children_of(&self, latent: &str) -> Vec<&str> {
        self.latent_edges.iter().filter(|e| e.latent == latent).map(|e| e.child.as_str()).collect()
    }

    /// Whether the directed edges contain no cycle.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree: BTreeMap<&str, usize> = self.observed.iter().map(|o| (o.as_str(), 0)).collect();
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.directed_edges {
            *indegree.entry(e.to.as_str()).or_default() += 1;
            indegree.entry(e.from.as_str()).or_default();
            out.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
        let mut ready: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &w in out.get(v).map(|v| v.as_slice()).unwrap_or(&[]) {
                let d = indegree.get_mut(w).expect("registered");
                *d -= 1;
                if *d == 0 {
                    ready.push(w);
                }
            }
        }
        seen == indegree.len()
    }

    /// Structural checks: labels resolve, edges are acyclic and no pair is both directed and undirected.
    pub fn validate(&self) -> Result<()> {
        let obs: BTreeSet<&str> = self.observed.iter().map(|s| s.as_str()).collect();
        let lat: BTreeSet<&str> = self.latents.iter().map(|s| s.as_str()).collect();
        let known = |l: &str| {
            if obs.contains(l) {
                Ok(())
            } else {
                Err(Error::LabelMismatch(format!("unknown observed label {l}")))
            }
        };
        for e in &self.directed_edges {
            known(&e.from)?;
            known(&e.to)?;
            if self.has_undirected(&e.from, &e.to) {
                return Err(Error::Constraint(format!("{} and {} are both directed and undirected", e.from, e.to)));
            }
        }
        for e in &self.undirected_edges {
            known(&e[0])?;
            known(&e[1])?;
        }
        for e in &self.latent_edges {
            known(&e.child)?;
            if !lat.contains(e.latent.as_str()) {
                return Err(Error::LabelMismatch(format!("unknown latent {}", e.latent)));
            }
        }
        if !self.is_acyclic() {
            return Err(Error::Constraint("directed edges contain a cycle".into()));
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        let mut g = self.clone();
        g.normalize();
        serde_json::to_value(&g).expect("graph serializes")
    }

    /// Canonical text form; parsing and re-serializing is byte-identical.
    pub fn to_json(&self) -> String {
        json::to_canonical_string(&self.to_json_value())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: CausalGraph = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    /// Graphviz text: latent nodes double-circled, undirected edges dashed.
    pub fn to_dot(&self) -> String {
        let mut g = self.clone();
        g.normalize();
        let q = |s: &str| format!("\"{}\"", s.replace('"', "\\\""));
        let mut out = String::from("digraph causal {\n");
        for o in &g.observed {
            out.push_str(&format!("  {} [shape=ellipse];\n", q(o)));
        }
        for l in &g.latents {
            out.push_str(&format!("  {} [shape=doublecircle];\n", q(l)));
        }
        let label = |c: Option<f64>| c.map(|c| format!(" [label=\"{c:.3}\"]")).unwrap_or_default();
        for e in &g.latent_edges {
            out.push_str(&format!("  {} -> {}{};\n", q(&e.latent), q(&e.child), label(e.coef)));
        }
        for e in &g.directed_edges {
            out.push_str(&format!("  {} -> {}{};\n", q(&e.from), q(&e.to), label(e.coef)));
        }
        for e in &g.undirected_edges {
            out.push_str(&format!("  {} -> {} [dir=none, style=dashed];\n", q(&e[0]), q(&e[1])));
        }
        out.push_str("}\n");
        out
    }
}
