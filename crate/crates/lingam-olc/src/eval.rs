//! Precision, recall and F1 over directed and non-adjacent relations, plus coefficient RMSE.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::simulate::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub truth: usize,
    pub found: usize,
    pub correct: usize,
}

impl Tally {
    /// Empty found and empty truth score 1; otherwise an empty side scores 0.
    pub fn scores(&self) -> Scores {
        if self.truth == 0 && self.found == 0 {
            return Scores { precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.correct, self.found);
        let recall = ratio(self.correct, self.truth);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Scores { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentMatch {
    pub learned: usize,
    pub truth: usize,
    /// True latents paired with a learned one whose child set has Jaccard index at least 2/3.
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub directed: Scores,
    pub nonadjacent: Scores,
    pub rmse: Option<f64>,
    pub directed_counts: Tally,
    pub nonadjacent_counts: Tally,
    pub latents: LatentMatch,
}

fn same_labels(learned: &CausalGraph, truth: &CausalGraph) -> Result<()> {
    let a: BTreeSet<&String> = learned.observed.iter().collect();
    let b: BTreeSet<&String> = truth.observed.iter().collect();
    if a != b {
        return Err(Error::LabelMismatch("learned and true graphs have different observed labels".into()));
    }
    Ok(())
}

/// Undirected learned edges count as found but never correct.
pub fn directed_tally(learned: &CausalGraph, truth: &CausalGraph) -> Result<Tally> {
    same_labels(learned, truth)?;
    let t: BTreeSet<(&str, &str)> = truth.directed_edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
    let correct = learned.directed_edges.iter().filter(|e| t.contains(&(e.from.as_str(), e.to.as_str()))).count();
    Ok(Tally { truth: t.len(), found: learned.directed_edges.len() + learned.undirected_edges.len(), correct })
}

pub fn edge_metrics(learned: &CausalGraph, truth: &CausalGraph) -> Result<Scores> {
    Ok(directed_tally(learned, truth)?.scores())
}

fn nonadjacent_pairs(g: &CausalGraph) -> BTreeSet<(String, String)> {
    let mut labels = g.observed.clone();
    labels.sort();
    let mut out = BTreeSet::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            if g.non_adjacent(a, b) {
                out.insert((a.clone(), b.clone()));
            }
        }
    }
    out
}

pub fn nonadjacent_tally(learned: &CausalGraph, truth: &CausalGraph) -> Result<Tally> {
    same_labels(learned, truth)?;
    let l = nonadjacent_pairs(learned);
    let t = nonadjacent_pairs(truth);
    Ok(Tally { truth: t.len(), found: l.len(), correct: l.intersection(&t).count() })
}

pub fn nonadjacency_metrics(learned: &CausalGraph, truth: &CausalGraph) -> Result<Scores> {
    Ok(nonadjacent_tally(learned, truth)?.scores())
}

/// `sqrt(sum (b - b_hat)^2 / p^2)` over the full observed `B`; absent coefficients count as 0.
pub fn rmse(learned: &CausalGraph, truth: &ModelSpec) -> Result<f64> {
    same_labels(learned, &truth.truth_graph())?;
    let index: BTreeMap<&str, usize> = truth.observed.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let p = truth.p();
    let mut est = vec![vec![0.0; p]; p];
    for e in &learned.directed_edges {
        est[index[e.to.as_str()]][index[e.from.as_str()]] = e.coef.unwrap_or(0.0);
    }
    let mut sum = 0.0;
    for i in 0..p {
        for j in 0..p {
            sum += (truth.b[i][j] - est[i][j]).powi(2);
        }
    }
    Ok((sum / (p * p) as f64).sqrt())
}

fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Largest number of true latents matched one-to-one with learned ones.
pub fn latent_match(learned: &CausalGraph, truth: &CausalGraph) -> LatentMatch {
    fn sets(g: &CausalGraph) -> Vec<BTreeSet<&str>> {
        g.latents.iter().map(|l| g.children_of(l).into_iter().collect()).collect()
    }
    let (ls, ts) = (sets(learned), sets(truth));
    fn best(t: usize, ts: &[BTreeSet<&str>], ls: &[BTreeSet<&str>], used: &mut Vec<bool>) -> usize {
        if t == ts.len() {
            return 0;
        }
        let mut top = best(t + 1, ts, ls, used);
        for l in 0..ls.len() {
            if !used[l] && jaccard(&ts[t], &ls[l]) >= 2.0 / 3.0 {
                used[l] = true;
                top = top.max(1 + best(t + 1, ts, ls, used));
                used[l] = false;
            }
        }
        top
    }
    let matched = best(0, &ts, &ls, &mut vec![false; ls.len()]);
    LatentMatch { learned: ls.len(), truth: ts.len(), matched }
}

pub fn evaluate(learned: &CausalGraph, truth: &ModelSpec) -> Result<MetricsReport> {
    let tg = truth.truth_graph();
    let directed_counts = directed_tally(learned, &tg)?;
    let nonadjacent_counts = nonadjacent_tally(learned, &tg)?;
    Ok(MetricsReport {
        directed: directed_counts.scores(),
        nonadjacent: nonadjacent_counts.scores(),
        rmse: Some(rmse(learned, truth)?),
        directed_counts,
        nonadjacent_counts,
        latents: latent_match(learned, &tg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedEdge;
    use crate::simulate::build_case;
    use proptest::prelude::*;

    fn edge(a: &str, b: &str) -> DirectedEdge {
        DirectedEdge { from: a.into(), to: b.into(), coef: None }
    }

    #[test]
    fn directed_scores() {
        let truth = build_case(2, 0).unwrap().truth_graph();
        assert_eq!(edge_metrics(&truth, &truth).unwrap(), Scores { precision: 1.0, recall: 1.0, f1: 1.0 });
        let mut reversed = truth.clone();
        reversed.directed_edges = vec![edge("X3", "X2")];
        assert_eq!(edge_metrics(&reversed, &truth).unwrap().f1, 0.0);
        let mut spurious = truth.clone();
        spurious.directed_edges.push(edge("X1", "X3"));
        let s = edge_metrics(&spurious, &truth).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        let mut undirected = truth.clone();
        undirected.directed_edges.clear();
        undirected.undirected_edges.push(["X2".into(), "X3".into()]);
        let u = directed_tally(&undirected, &truth).unwrap();
        assert_eq!((u.found, u.correct), (1, 0));
        let empty = CausalGraph::new(truth.observed.clone());
        assert_eq!(edge_metrics(&empty, &truth).unwrap().recall, 0.0);
    }

    #[test]
    fn nonadjacent_scores() {
        let truth = build_case(1, 0).unwrap().truth_graph();
        assert_eq!(nonadjacency_metrics(&truth, &truth).unwrap().f1, 1.0);
        let mut complete = truth.clone();
        for (a, b) in [("X1", "X2"), ("X1", "X3"), ("X2", "X3")] {
            complete.undirected_edges.push([a.into(), b.into()]);
        }
        assert_eq!(nonadjacency_metrics(&complete, &truth).unwrap(), Scores { precision: 0.0, recall: 0.0, f1: 0.0 });
        let mut missed = truth.clone();
        missed.undirected_edges.push(["X1".into(), "X2".into()]);
        let s = nonadjacency_metrics(&missed, &truth).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 2.0 / 3.0));
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn vacuous_agreement_scores_one() {
        let t = Tally { truth: 0, found: 0, correct: 0 };
        assert_eq!(t.scores().f1, 1.0);
        assert_eq!(Tally { truth: 2, found: 0, correct: 0 }.scores().recall, 0.0);
    }

    #[test]
    fn rmse_values() {
        let spec = build_case(2, 0).unwrap();
        assert_eq!(rmse(&spec.truth_graph(), &spec).unwrap(), 0.0);
        let mut s = spec.clone();
        s.b[2][1] = 0.5;
        let mut learned = s.truth_graph();
        learned.directed_edges.clear();
        assert!((rmse(&learned, &s).unwrap() - (0.25f64 / 9.0).sqrt()).abs() < 1e-12);
        let c1 = build_case(1, 0).unwrap();
        assert_eq!(rmse(&c1.truth_graph(), &c1).unwrap(), 0.0);
    }

    #[test]
    fn label_mismatch_is_an_error() {
        let a = build_case(1, 0).unwrap().truth_graph();
        let b = build_case(3, 0).unwrap().truth_graph();
        assert!(matches!(edge_metrics(&a, &b), Err(Error::LabelMismatch(_))));
    }

    #[test]
    fn latent_matching() {
        let truth = build_case(5, 0).unwrap().truth_graph();
        let m = latent_match(&truth, &truth);
        assert_eq!((m.learned, m.truth, m.matched), (2, 2, 2));
        let mut one = truth.clone();
        one.latents.truncate(1);
        one.latent_edges.retain(|e| e.latent == "L1");
        assert_eq!(latent_match(&one, &truth).matched, 1);
    }

    proptest! {
        #[test]
        fn relabeling_preserves_nonadjacency(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), case in 1u32..=6) {
            let spec = build_case(case, 1).unwrap();
            let truth = spec.truth_graph();
            let mut learned = truth.clone();
            learned.directed_edges.truncate(1);
            learned.undirected_edges.push([truth.observed[0].clone(), truth.observed[2].clone()]);
            let base = nonadjacency_metrics(&learned, &truth).unwrap();
            let p = truth.observed.len();
            let map = |l: &String| -> String {
                let i = truth.observed.iter().position(|o| o == l).unwrap();
                format!("V{}", perm.iter().filter(|&&x| x < p).nth(i).unwrap())
            };
            let relabel = |g: &CausalGraph| {
                let mut h = g.clone();
                h.observed = g.observed.iter().map(map).collect();
                for e in h.directed_edges.iter_mut() { e.from = map(&e.from); e.to = map(&e.to); }
                for e in h.undirected_edges.iter_mut() { *e = [map(&e[0]), map(&e[1])]; }
                for e in h.latent_edges.iter_mut() { e.child = map(&e.child); }
                h
            };
            prop_assert_eq!(nonadjacency_metrics(&relabel(&learned), &relabel(&truth)).unwrap(), base);
        }
    }
}
