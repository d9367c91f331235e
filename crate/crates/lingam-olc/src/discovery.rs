//! The search loop: latent identification, orientation, redundant-edge
//! elimination and recovery of `B` and `Lambda` from the assembled mixing matrix.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, DirectedEdge, LatentEdge};
use crate::independence::{dependence_statistic, test_independence, TestSettings};
use crate::mixing::{
    anchored_least_squares, combine, recover_matrices, surrogate_residual, Component, EstimationSettings, MixingMatrix,
};
use crate::olc::{determine_order, identify_confounder, pair_dependent, HypothesisResult, Reason};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub alpha: f64,
    pub n_permutations: usize,
    pub subsample_cap: usize,
    pub degeneracy_multiplier: f64,
    pub rank_tol: f64,
    pub seed: u64,
    /// Defaults to the number of observed variables.
    pub max_rounds: Option<usize>,
    /// Divides `alpha` when set.
    pub bonferroni: Option<usize>,
    /// Half-width, in jackknife standard errors, of the loading-ratio interval searched for the weight vector; 0 uses the point estimate.
    pub ratio_scan: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: 0.05,
            n_permutations: 199,
            subsample_cap: 2000,
            degeneracy_multiplier: 3.0,
            rank_tol: 1e-8,
            seed: 0,
            max_rounds: None,
            bonferroni: None,
            ratio_scan: 2.0,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if self.n_permutations < 99 {
            return Err(Error::InvalidArgument("n_permutations must be at least 99".into()));
        }
        if self.max_rounds == Some(0) {
            return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
        }
        if !(self.ratio_scan >= 0.0 && self.ratio_scan.is_finite()) {
            return Err(Error::InvalidArgument("ratio_scan must be a finite non-negative number".into()));
        }
        if self.bonferroni == Some(0) {
            return Err(Error::InvalidArgument("bonferroni divisor must be positive".into()));
        }
        if self.degeneracy_multiplier < 0.0 || self.rank_tol <= 0.0 || self.subsample_cap < 20 {
            return Err(Error::InvalidArgument("degeneracy_multiplier, rank_tol or subsample_cap out of range".into()));
        }
        Ok(())
    }

    pub fn test_settings(&self) -> TestSettings {
        TestSettings {
            alpha: self.alpha / self.bonferroni.unwrap_or(1) as f64,
            n_permutations: self.n_permutations,
            subsample_cap: self.subsample_cap,
        }
    }

    pub fn estimation_settings(&self) -> EstimationSettings {
        EstimationSettings { degeneracy_multiplier: self.degeneracy_multiplier, rank_tol: self.rank_tol }
    }
}

/// A shared component with its loadings and the observed variables that can stand in for it.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedComponent {
    pub component: Component,
    pub loadings: BTreeMap<String, f64>,
    pub surrogates: Vec<String>,
    /// Relative standard error of the loading of the first surrogate, which fixes the column scale.
    pub scale_se: f64,
}

impl IdentifiedComponent {
    fn loading(&self, label: &str) -> f64 {
        self.loadings.get(label).copied().unwrap_or(0.0)
    }

    fn affects(&self, label: &str) -> bool {
        self.loading(label).abs() > 1e-12
    }

    fn noise_owner(&self) -> Option<&str> {
        match &self.component {
            Component::ObservedNoise(o) => Some(o),
            Component::LatentConfounder(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualContext {
    pub components: Vec<IdentifiedComponent>,
    pub rank_tol: f64,
}

impl Default for ResidualContext {
    fn default() -> Self {
        ResidualContext { components: Vec::new(), rank_tol: 1e-8 }
    }
}

impl ResidualContext {
    pub fn has_scale_uncertainty(&self) -> bool {
        self.components.iter().any(|c| c.scale_se > 0.0)
    }

    /// Multiplies each latent's first-surrogate loading by `(1 + step * scale_se)^2`, which
    /// moves the column scale by `step` standard errors.
    pub fn rescaled(&self, step: f64) -> ResidualContext {
        let mut out = self.clone();
        for c in out.components.iter_mut() {
            if c.scale_se <= 0.0 {
                continue;
            }
            let Some(first) = c.surrogates.first().cloned() else { continue };
            let f = (1.0 + step * c.scale_se).max(0.25);
            if let Some(v) = c.loadings.get_mut(&first) {
                *v *= f * f;
            }
        }
        out
    }

    /// Removes every identified component affecting `target` except the noises
    /// owned by `target` or listed in `keep_noise`; surrogates never come from `avoid`.
    ///
    /// `Ok(None)` means nothing had to be removed.
    pub fn residual(&self, data: &Dataset, target: &str, keep_noise: &[&str], avoid: &[&str]) -> Result<Option<Vec<f64>>> {
        let kept = |c: &IdentifiedComponent| c.noise_owner().is_some_and(|o| o == target || keep_noise.contains(&o));
        let mut remove: Vec<usize> =
            (0..self.components.len()).filter(|&i| self.components[i].affects(target) && !kept(&self.components[i])).collect();
        if remove.is_empty() {
            return Ok(None);
        }
        let mut surrogates: Vec<String> = Vec::new();
        let mut idx = 0;
        while idx < remove.len() {
            let comp = &self.components[remove[idx]];
            let chosen = match &comp.component {
                Component::ObservedNoise(owner) => {
                    if avoid.contains(&owner.as_str()) || owner == target {
                        return Err(Error::NoNullSpace);
                    }
                    owner.clone()
                }
                Component::LatentConfounder(_) => {
                    let admissible: Vec<&String> =
                        comp.surrogates.iter().filter(|s| s.as_str() != target && !avoid.contains(&s.as_str())).collect();
                    let fresh = admissible.iter().find(|s| !surrogates.contains(s));
                    match fresh.or(admissible.first()) {
                        Some(s) => (*s).clone(),
                        None => return Err(Error::NoNullSpace),
                    }
                }
            };
            if !surrogates.contains(&chosen) {
                for (ci, c) in self.components.iter().enumerate() {
                    let own_noise = c.noise_owner() == Some(chosen.as_str());
                    if c.affects(&chosen) && !own_noise && !kept(c) && !remove.contains(&ci) {
                        remove.push(ci);
                    }
                }
                surrogates.push(chosen);
            }
            idx += 1;
        }
        let rows: Vec<&str> = std::iter::once(target).chain(surrogates.iter().map(|s| s.as_str())).collect();
        let a_sub = DMatrix::from_fn(rows.len(), remove.len(), |r, c| self.components[remove[c]].loading(rows[r]));
        let xk: Vec<&[f64]> = surrogates.iter().map(|s| data.by_label(s)).collect::<Result<_>>()?;
        surrogate_residual(data.by_label(target)?, &xk, &a_sub, self.rank_tol).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Undirected,
    /// Lower index causes higher index.
    Forward,
    Backward,
    NonAdjacent,
}

#[derive(Debug, Clone)]
struct LatentInfo {
    id: String,
    /// child index -> (loading, standard error)
    loadings: BTreeMap<usize, (f64, f64)>,
    surrogates: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Triple {
    k: usize,
    children: [usize; 3],
    loadings: BTreeMap<usize, (f64, f64)>,
}

/// Counters and timings from one search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub rounds: usize,
    pub hypotheses: usize,
    pub degenerate: usize,
    pub accepted: usize,
    pub sweep_seconds: f64,
}

/// Mutable search state over one dataset.
pub struct SearchState<'a> {
    data: &'a Dataset,
    cfg: &'a Config,
    labels: Vec<String>,
    rel: BTreeMap<(usize, usize), Relation>,
    independent: BTreeSet<(usize, usize)>,
    latents: Vec<LatentInfo>,
    /// owner -> (variable -> total effect of the owner's noise)
    noise: BTreeMap<usize, BTreeMap<usize, f64>>,
    warnings: Vec<String>,
    /// Results keyed by hypothesis and a fingerprint of its residualized inputs.
    memo: HashMap<(String, u64), HypothesisResult>,
    pub stats: SearchStats,
}

/// Seconds since the call; always 0 on wasm32, which has no monotonic clock.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl Fn() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl Fn() -> f64 {
    || 0.0
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl<'a> SearchState<'a> {
    /// Complete undirected graph, minus pairs the dependence screen finds independent.
    pub fn new(data: &'a Dataset, cfg: &'a Config) -> Self {
        let labels = data.labels().to_vec();
        let p = labels.len();
        let mut state = SearchState {
            data,
            cfg,
            labels,
            rel: BTreeMap::new(),
            independent: BTreeSet::new(),
            latents: Vec::new(),
            noise: BTreeMap::new(),
            warnings: Vec::new(),
            memo: HashMap::new(),
            stats: SearchStats::default(),
        };
        for i in 0..p {
            for j in (i + 1)..p {
                let s = seed::derive(cfg.seed, &format!("screen:{}|{}", state.labels[i], state.labels[j]));
                if pair_dependent(data.column(i), data.column(j), cfg, s) {
                    state.rel.insert((i, j), Relation::Undirected);
                } else {
                    state.rel.insert((i, j), Relation::NonAdjacent);
                    state.independent.insert((i, j));
                }
            }
        }
        state
    }

    fn undirected_pairs(&self) -> Vec<(usize, usize)> {
        self.rel.iter().filter(|(_, r)| **r == Relation::Undirected).map(|(k, _)| *k).collect()
    }

    fn directed(&self) -> Vec<(usize, usize)> {
        self.rel
            .iter()
            .filter_map(|(&(i, j), r)| match r {
                Relation::Forward => Some((i, j)),
                Relation::Backward => Some((j, i)),
                _ => None,
            })
            .collect()
    }

    /// `reach[a][b]`: a directed path leads from `a` to `b`.
    fn reachability(&self) -> Vec<Vec<bool>> {
        let p = self.labels.len();
        let mut r = vec![vec![false; p]; p];
        for (a, b) in self.directed() {
            r[a][b] = true;
        }
        for k in 0..p {
            for a in 0..p {
                if r[a][k] {
                    for b in 0..p {
                        if r[k][b] {
                            r[a][b] = true;
                        }
                    }
                }
            }
        }
        r
    }

    fn record(&mut self, r: &HypothesisResult) {
        self.stats.hypotheses += 1;
        if r.reason == Reason::CumulantDegenerate {
            self.stats.degenerate += 1;
        }
        if r.accepted {
            self.stats.accepted += 1;
        }
    }

    /// Re-evaluates a hypothesis only when the residuals it would see have changed.
    fn evaluate(
        &mut self,
        key: String,
        inputs: &[(&str, &[&str], &[&str])],
        ctx: &ResidualContext,
        run: impl FnOnce() -> HypothesisResult,
    ) -> HypothesisResult {
        let mut h = DefaultHasher::new();
        for (target, keep, avoid) in inputs {
            match ctx.residual(self.data, target, keep, avoid) {
                Ok(Some(r)) => r.iter().for_each(|v| v.to_bits().hash(&mut h)),
                Ok(None) => 0u8.hash(&mut h),
                Err(_) => 1u8.hash(&mut h),
            }
        }
        for c in &ctx.components {
            if inputs.iter().any(|(t, _, _)| c.affects(t)) {
                c.scale_se.to_bits().hash(&mut h);
            }
        }
        let fp = (key, h.finish());
        if let Some(r) = self.memo.get(&fp) {
            return r.clone();
        }
        let r = run();
        self.record(&r);
        self.memo.insert(fp, r.clone());
        r
    }

    pub fn context(&self) -> ResidualContext {
        let mut components = Vec::new();
        for l in &self.latents {
            components.push(IdentifiedComponent {
                component: Component::LatentConfounder(l.id.clone()),
                loadings: l.loadings.iter().map(|(&c, &(v, _))| (self.labels[c].clone(), v)).collect(),
                surrogates: l.surrogates.iter().map(|&s| self.labels[s].clone()).collect(),
                scale_se: l
                    .surrogates
                    .first()
                    .and_then(|s| l.loadings.get(s))
                    .map(|&(v, se)| if v != 0.0 && se.is_finite() { (se / v).abs() } else { 0.0 })
                    .unwrap_or(0.0),
            });
        }
        for (&owner, loads) in &self.noise {
            components.push(IdentifiedComponent {
                component: Component::ObservedNoise(self.labels[owner].clone()),
                loadings: loads.iter().map(|(&c, &v)| (self.labels[c].clone(), v)).collect(),
                surrogates: vec![self.labels[owner].clone()],
                scale_se: 0.0,
            });
        }
        ResidualContext { components, rank_tol: self.cfg.rank_tol }
    }

    /// Tests `(X_k, {X~_i, X~_j})` for every unresolved pair and third variable,
    /// removes the edges that accepted triples rule out and adds merged latents.
    pub fn confounder_sweep(&mut self) -> bool {
        let ctx = self.context();
        let p = self.labels.len();
        let mut triples = Vec::new();
        for (i, j) in self.undirected_pairs() {
            for k in 0..p {
                if k == i || k == j || self.independent.contains(&key(k, i)) || self.independent.contains(&key(k, j)) {
                    continue;
                }
                let (li, lj, lk) = (self.labels[i].clone(), self.labels[j].clone(), self.labels[k].clone());
                let (data, cfg) = (self.data, self.cfg);
                let keep = [li.as_str(), lj.as_str()];
                let avoid = [li.as_str(), lj.as_str(), lk.as_str()];
                let r = self.evaluate(
                    format!("latent|{li}|{lj}|{lk}"),
                    &[(&li, &keep, &avoid), (&lj, &keep, &avoid)],
                    &ctx,
                    || identify_confounder(&li, &lj, &lk, &ctx, data, cfg),
                );
                if !r.accepted {
                    continue;
                }
                let col = r.estimated_column.expect("accepted result carries a column");
                let mut loadings = BTreeMap::new();
                for (idx, l) in [k, i, j].into_iter().zip(&col) {
                    loadings.insert(idx, (l.value, l.se));
                }
                let mut children = [k, i, j];
                children.sort_unstable();
                triples.push(Triple { k, children, loadings });
            }
        }
        let mut changed = false;
        for t in &triples {
            for &other in t.children.iter().filter(|&&c| c != t.k) {
                let pair = key(t.k, other);
                if self.rel[&pair] == Relation::Undirected {
                    self.rel.insert(pair, Relation::NonAdjacent);
                    changed = true;
                }
            }
        }
        for group in self.group_triples(&triples) {
            changed |= self.add_latent(&group);
        }
        changed
    }

    fn compatible(&self, a: &Triple, b: &Triple) -> bool {
        if a.children == b.children {
            return true;
        }
        let common: Vec<usize> = a.children.iter().filter(|c| b.children.contains(c)).copied().collect();
        if common.is_empty() {
            return false;
        }
        let sign = if a.loadings[&common[0]].0 * b.loadings[&common[0]].0 < 0.0 { -1.0 } else { 1.0 };
        for c in &common {
            let (va, sa) = a.loadings[c];
            let (vb, sb) = b.loadings[c];
            if (va - sign * vb).abs() > 2.0 * (sa * sa + sb * sb).sqrt() {
                return false;
            }
        }
        for x in a.children.iter().filter(|c| !b.children.contains(c)) {
            for y in b.children.iter().filter(|c| !a.children.contains(c)) {
                if self.independent.contains(&key(*x, *y)) {
                    return false;
                }
            }
        }
        true
    }

    fn group_triples(&self, triples: &[Triple]) -> Vec<Vec<Triple>> {
        let n = triples.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for a in 0..n {
            for b in (a + 1)..n {
                if self.compatible(&triples[a], &triples[b]) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[rb.max(ra)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<Triple>> = BTreeMap::new();
        for (i, t) in triples.iter().enumerate() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(t.clone());
        }
        groups.into_values().collect()
    }

    /// Averages sign-aligned loadings of a group; returns false when the child
    /// set is already known.
    fn add_latent(&mut self, group: &[Triple]) -> bool {
        let mut sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        let mut pending: Vec<&Triple> = group.iter().collect();
        while !pending.is_empty() {
            let pos = pending.iter().position(|t| sums.is_empty() || t.children.iter().any(|c| sums.contains_key(c)));
            let t = pending.remove(pos.unwrap_or(0));
            let sign = t
                .children
                .iter()
                .find(|c| sums.contains_key(c))
                .map(|c| if sums[c].0 * t.loadings[c].0 < 0.0 { -1.0 } else { 1.0 })
                .unwrap_or(1.0);
            for (&c, &(v, se)) in &t.loadings {
                let e = sums.entry(c).or_insert((0.0, 0.0, 0));
                e.0 += sign * v;
                e.1 += se * se;
                e.2 += 1;
            }
        }
        let children: BTreeSet<usize> = sums.keys().copied().collect();
        if self.latents.iter().any(|l| l.loadings.keys().copied().collect::<BTreeSet<_>>() == children) {
            return false;
        }
        let loadings = sums.into_iter().map(|(c, (s, v, n))| (c, (s / n as f64, v.sqrt() / n as f64))).collect();
        let mut surrogates: Vec<usize> = Vec::new();
        for t in group {
            if !surrogates.contains(&t.k) {
                surrogates.push(t.k);
            }
        }
        surrogates.extend(children.iter().filter(|c| !surrogates.contains(c)).copied().collect::<Vec<_>>());
        let id = format!("L{}", self.latents.len() + 1);
        self.latents.push(LatentInfo { id, loadings, surrogates });
        true
    }

    fn creates_cycle(&self, from: usize, to: usize) -> bool {
        self.reachability()[to][from]
    }

    /// Tests both orientations of every unresolved pair on residualized data.
    pub fn order_sweep(&mut self) -> bool {
        let ctx = self.context();
        let mut decisions: Vec<(usize, usize, HypothesisResult, bool)> = Vec::new();
        let mut separated: Vec<(usize, usize)> = Vec::new();
        for (i, j) in self.undirected_pairs() {
            let (li, lj) = (self.labels[i].clone(), self.labels[j].clone());
            let (data, cfg) = (self.data, self.cfg);
            let pair = [li.as_str(), lj.as_str()];
            let fwd = self.evaluate(
                format!("order|{li}|{lj}"),
                &[(&li, &[li.as_str()], &pair), (&lj, &pair, &pair)],
                &ctx,
                || determine_order(&li, &lj, &ctx, data, cfg),
            );
            let bwd = self.evaluate(
                format!("order|{lj}|{li}"),
                &[(&lj, &[lj.as_str()], &pair), (&li, &pair, &pair)],
                &ctx,
                || determine_order(&lj, &li, &ctx, data, cfg),
            );
            match (fwd.accepted, bwd.accepted) {
                (true, true) => {
                    if fwd.p_value() >= bwd.p_value() {
                        decisions.push((i, j, fwd, true));
                    } else {
                        decisions.push((j, i, bwd, true));
                    }
                }
                (true, false) => decisions.push((i, j, fwd, false)),
                (false, true) => decisions.push((j, i, bwd, false)),
                (false, false) => {
                    if self.residuals_independent(&ctx, i, j) {
                        separated.push((i, j));
                    }
                }
            }
        }
        let mut changed = false;
        for (i, j) in separated {
            self.rel.insert(key(i, j), Relation::NonAdjacent);
            changed = true;
        }
        for (from, to, r, weak) in decisions {
            if self.creates_cycle(from, to) {
                continue;
            }
            self.rel.insert(key(from, to), if from < to { Relation::Forward } else { Relation::Backward });
            let col = r.estimated_column.expect("accepted result carries a column");
            let scale = col[0].value;
            let entry = self.noise.entry(from).or_default();
            entry.insert(from, 1.0);
            entry.insert(to, col[2].value / scale);
            if weak {
                self.warnings.push(format!("weakly oriented {} -> {}", self.labels[from], self.labels[to]));
            }
            changed = true;
        }
        changed
    }

    /// After removing identified components, both residuals are independent of the other raw variable.
    fn residuals_independent(&self, ctx: &ResidualContext, i: usize, j: usize) -> bool {
        let (li, lj) = (self.labels[i].as_str(), self.labels[j].as_str());
        let ri = ctx.residual(self.data, li, &[li, lj], &[li, lj]);
        let rj = ctx.residual(self.data, lj, &[li, lj], &[li, lj]);
        let (Ok(ri), Ok(rj)) = (ri, rj) else {
            return false;
        };
        if ri.is_none() && rj.is_none() {
            return false;
        }
        let xi = ri.unwrap_or_else(|| self.data.column(i).to_vec());
        let xj = rj.unwrap_or_else(|| self.data.column(j).to_vec());
        let settings = self.cfg.test_settings();
        let s = seed::derive(self.cfg.seed, &format!("separation:{li}|{lj}"));
        let a = test_independence(&xj, &[self.data.column(i)], &settings, seed::derive(s, "a"));
        let b = test_independence(&xi, &[self.data.column(j)], &settings, seed::derive(s, "b"));
        matches!((a, b), (Ok(a), Ok(b)) if a.independent && b.independent)
    }

    /// Removes `i -> j` when a mediating set explains all of `X_i`'s influence on `X_j`.
    pub fn eliminate_redundant(&mut self) -> bool {
        let mut changed = false;
        let ctx = self.context();
        for (i, j) in self.directed() {
            let reach = self.reachability();
            let p = self.labels.len();
            let mediators: Vec<usize> = (0..p).filter(|&m| m != i && m != j && reach[i][m] && reach[m][j]).collect();
            if mediators.is_empty() {
                continue;
            }
            let li = self.labels[i].as_str();
            let mut removed: Vec<usize> = Vec::new();
            let mut surrogates: Vec<usize> = mediators.clone();
            let mut ok = true;
            for (ci, c) in ctx.components.iter().enumerate() {
                let owner = c.noise_owner().and_then(|o| self.data.index_of(o));
                let needed = c.affects(li) || owner.is_some_and(|o| mediators.contains(&o));
                if !needed {
                    continue;
                }
                match owner {
                    Some(o) if o == i => {}
                    Some(o) => {
                        if !surrogates.contains(&o) {
                            surrogates.push(o);
                        }
                    }
                    None => {
                        let pick = c.surrogates.iter().filter_map(|s| self.data.index_of(s)).find(|&s| {
                            s != i && s != j && (!reach[i][s] || mediators.contains(&s)) && !surrogates.contains(&s)
                        });
                        match pick {
                            Some(s) => surrogates.push(s),
                            None => ok = false,
                        }
                    }
                }
                removed.push(ci);
            }
            if !ok || removed.is_empty() {
                continue;
            }
            let xi = self.data.column(i);
            let lj = self.labels[j].clone();
            let settings = self.cfg.test_settings();
            let mut all_independent = true;
            for (tag, with_i) in [("prime", false), ("double", true)] {
                let mut rows: Vec<usize> = vec![j];
                if with_i {
                    rows.push(i);
                }
                rows.extend(&surrogates);
                let rest: Vec<&[f64]> = rows[1..].iter().map(|&r| self.data.column(r)).collect();
                let s = seed::derive(self.cfg.seed, &format!("redundant:{tag}:{li}|{lj}"));
                let residual_under = |ctx: &ResidualContext| {
                    let a_sub = DMatrix::from_fn(rows.len(), removed.len(), |r, c| {
                        ctx.components[removed[c]].loading(&self.labels[rows[r]])
                    });
                    combine(&anchored_least_squares(&a_sub), self.data.column(j), &rest)
                };
                let mut residual = residual_under(&ctx);
                if self.cfg.ratio_scan > 0.0 && ctx.has_scale_uncertainty() {
                    let mut best = dependence_statistic(&residual, &[xi], &settings, s).unwrap_or(f64::INFINITY);
                    for step in [-1.0, -0.5, 0.5, 1.0] {
                        let cand = residual_under(&ctx.rescaled(step * self.cfg.ratio_scan));
                        let stat = dependence_statistic(&cand, &[xi], &settings, s).unwrap_or(f64::INFINITY);
                        if stat < best {
                            best = stat;
                            residual = cand;
                        }
                    }
                }
                match test_independence(&residual, &[xi], &settings, s) {
                    Ok(r) if r.independent => {}
                    _ => {
                        all_independent = false;
                        break;
                    }
                }
            }
            if all_independent {
                self.rel.insert(key(i, j), Relation::NonAdjacent);
                changed = true;
            }
        }
        changed
    }

    /// Latent columns, then one noise column per observed variable (unit vector when unidentified).
    pub fn mixing(&self) -> MixingMatrix {
        let p = self.labels.len();
        let mut columns: Vec<Component> =
            self.latents.iter().map(|l| Component::LatentConfounder(l.id.clone())).collect();
        columns.extend(self.labels.iter().map(|l| Component::ObservedNoise(l.clone())));
        let d = columns.len();
        let mut entries = vec![vec![0.0; d]; p];
        let mut mask = vec![vec![false; d]; p];
        for (c, l) in self.latents.iter().enumerate() {
            for (&r, &(v, _)) in &l.loadings {
                entries[r][c] = v;
                mask[r][c] = true;
            }
        }
        let off = self.latents.len();
        for o in 0..p {
            entries[o][off + o] = 1.0;
            if let Some(loads) = self.noise.get(&o) {
                for (&r, &v) in loads {
                    entries[r][off + o] = v;
                    mask[r][off + o] = true;
                }
            }
        }
        MixingMatrix { rows: self.labels.clone(), columns, entries, estimated_mask: mask }
    }

    /// Graph without coefficients.
    pub fn graph(&self) -> CausalGraph {
        let mut g = CausalGraph::new(self.labels.clone());
        g.latents = self.latents.iter().map(|l| l.id.clone()).collect();
        for (&(i, j), r) in &self.rel {
            match r {
                Relation::Undirected => g.undirected_edges.push([self.labels[i].clone(), self.labels[j].clone()]),
                Relation::Forward => g.directed_edges.push(DirectedEdge {
                    from: self.labels[i].clone(),
                    to: self.labels[j].clone(),
                    coef: None,
                }),
                Relation::Backward => g.directed_edges.push(DirectedEdge {
                    from: self.labels[j].clone(),
                    to: self.labels[i].clone(),
                    coef: None,
                }),
                Relation::NonAdjacent => {}
            }
        }
        for l in &self.latents {
            for &c in l.loadings.keys() {
                g.latent_edges.push(LatentEdge { latent: l.id.clone(), child: self.labels[c].clone(), coef: None });
            }
        }
        g.warnings = self.warnings.clone();
        g.normalize();
        g
    }

    /// Round loop until nothing changes or the round budget is spent.
    pub fn run(&mut self) {
        let rounds = self.cfg.max_rounds.unwrap_or(self.labels.len()).max(1);
        let elapsed = stopwatch();
        for _ in 0..rounds {
            self.stats.rounds += 1;
            let latent_change = self.confounder_sweep();
            let order_change = self.order_sweep();
            if !latent_change && !order_change {
                break;
            }
        }
        self.stats.sweep_seconds = elapsed();
        self.eliminate_redundant();
        debug_assert!(self.graph().is_acyclic());
    }

    fn finish_warnings(&mut self) {
        if self.stats.hypotheses > 0 && self.stats.accepted == 0 && self.stats.degenerate == self.stats.hypotheses {
            self.warnings.push("higher-order cumulants are indistinguishable from zero; data look Gaussian".into());
        }
        if self.rel.values().any(|r| *r == Relation::Undirected) {
            self.warnings.push("undirected edges remain; some modelling assumption may be violated".into());
        }
    }
}

/// Writes `B` and `Lambda` entries onto edges whose endpoints are resolved,
/// that is, not touched by any undirected edge.
pub fn recover_coefficients(mixing: &MixingMatrix, graph: &CausalGraph) -> Result<CausalGraph> {
    let (b, lambda) = recover_matrices(mixing)?;
    let mut g = graph.clone();
    let unresolved: BTreeSet<&str> = graph.undirected_edges.iter().flat_map(|e| [e[0].as_str(), e[1].as_str()]).collect();
    let row = |l: &str| mixing.row_index(l).ok_or_else(|| Error::LabelMismatch(format!("{l} not in mixing matrix")));
    for e in g.directed_edges.iter_mut() {
        e.coef = if unresolved.contains(e.from.as_str()) || unresolved.contains(e.to.as_str()) {
            None
        } else {
            Some(b[(row(&e.to)?, row(&e.from)?)])
        };
    }
    let latents = mixing.latent_ids();
    for e in g.latent_edges.iter_mut() {
        let k = latents
            .iter()
            .position(|l| *l == e.latent)
            .ok_or_else(|| Error::LabelMismatch(format!("latent {} not in mixing matrix", e.latent)))?;
        e.coef = if unresolved.contains(e.child.as_str()) { None } else { Some(lambda[(row(&e.child)?, k)]) };
    }
    Ok(g)
}

/// Full search result.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub graph: CausalGraph,
    pub mixing: MixingMatrix,
    pub stats: SearchStats,
}

pub fn discover_detailed(data: &Dataset, cfg: &Config) -> Result<Discovery> {
    cfg.validate()?;
    if data.n_vars() < 3 {
        return Err(Error::Shape(format!("need at least 3 observed columns, got {}", data.n_vars())));
    }
    if data.n_samples() < 200 {
        return Err(Error::SampleSize { need: 200, got: data.n_samples() });
    }
    for (l, c) in data.labels().iter().zip(data.columns()) {
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::InvalidArgument(format!("column {l} is constant")));
        }
    }
    let mut state = SearchState::new(data, cfg);
    state.run();
    state.finish_warnings();
    let mixing = state.mixing();
    let graph = state.graph();
    let graph = match recover_coefficients(&mixing, &graph) {
        Ok(g) => g,
        Err(e) => {
            let mut g = graph;
            g.warnings.push(format!("coefficient recovery failed: {e}"));
            g
        }
    };
    Ok(Discovery { graph, mixing, stats: state.stats })
}

pub fn discover(data: &Dataset, cfg: &Config) -> Result<(CausalGraph, MixingMatrix)> {
    let d = discover_detailed(data, cfg)?;
    Ok((d.graph, d.mixing))
}
