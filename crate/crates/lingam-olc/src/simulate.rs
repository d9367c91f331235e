//! Ground-truth canonical models, the benchmark cases and sampling.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, DirectedEdge, LatentEdge};
use crate::mixing::{Component, MixingMatrix};
use crate::seed;

/// Law shared by latents and noises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    CubedGaussian,
    Uniform,
    Laplace,
    /// Zero cumulants above order two; useful as a degenerate control.
    Gaussian,
}

impl NoiseKind {
    fn draw(self, rng: &mut ChaCha8Rng, standardize: bool) -> f64 {
        match self {
            NoiseKind::CubedGaussian => {
                let z: f64 = rng.sample(StandardNormal);
                let v = z * z * z;
                if standardize {
                    v / 15f64.sqrt()
                } else {
                    v
                }
            }
            NoiseKind::Uniform => {
                let u: f64 = rng.random_range(-1.0..1.0);
                if standardize {
                    u * 3f64.sqrt()
                } else {
                    u
                }
            }
            NoiseKind::Laplace => {
                let a: f64 = rng.sample(Exp1);
                let b: f64 = rng.sample(Exp1);
                if standardize {
                    (a - b) / 2f64.sqrt()
                } else {
                    a - b
                }
            }
            NoiseKind::Gaussian => rng.sample(StandardNormal),
        }
    }
}

/// `X = B X + Lambda L + S`; `b[i][j]` is the effect of `observed[j]` on `observed[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub observed: Vec<String>,
    pub latents: Vec<String>,
    pub b: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub noise_kind: NoiseKind,
    pub standardize_noise: bool,
}

impl ModelSpec {
    pub fn new(
        observed: Vec<String>,
        latents: Vec<String>,
        b: Vec<Vec<f64>>,
        lambda: Vec<Vec<f64>>,
        noise_kind: NoiseKind,
    ) -> Result<Self> {
        let spec = ModelSpec { observed, latents, b, lambda, noise_kind, standardize_noise: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn p(&self) -> usize {
        self.observed.len()
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.p(), |i, j| self.b[i][j])
    }

    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.latents.len(), |i, k| self.lambda[i][k])
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.b.len() != p || self.b.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("B must be square over the observed variables".into()));
        }
        if self.lambda.len() != p || self.lambda.iter().any(|r| r.len() != self.latents.len()) {
            return Err(Error::Shape("Lambda must be observed by latent".into()));
        }
        if (0..p).any(|i| self.b[i][i] != 0.0) {
            return Err(Error::Constraint("self loops are not allowed".into()));
        }
        if !self.truth_graph().is_acyclic() {
            return Err(Error::Constraint("B is not acyclic".into()));
        }
        if !self.latents.is_empty() {
            let svd = self.lambda_matrix().svd(false, false);
            let smax = svd.singular_values.max();
            let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
            if rank < self.latents.len() {
                return Err(Error::Constraint("Lambda lacks full column rank".into()));
            }
        }
        Ok(())
    }

    /// `(I - B)^-1`.
    pub fn total_effects(&self) -> DMatrix<f64> {
        let p = self.p();
        (DMatrix::identity(p, p) - self.b_matrix()).try_inverse().expect("acyclic B is invertible")
    }

    pub fn truth_graph(&self) -> CausalGraph {
        let mut g = CausalGraph::new(self.observed.clone());
        g.latents = self.latents.clone();
        for (i, row) in self.b.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    g.directed_edges.push(DirectedEdge {
                        from: self.observed[j].clone(),
                        to: self.observed[i].clone(),
                        coef: Some(c),
                    });
                }
            }
        }
        for (i, row) in self.lambda.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    g.latent_edges.push(LatentEdge {
                        latent: self.latents[k].clone(),
                        child: self.observed[i].clone(),
                        coef: Some(c),
                    });
                }
            }
        }
        g.normalize();
        g
    }

    /// Ancestors of each observed variable along directed edges.
    pub fn ancestors(&self) -> BTreeMap<String, Vec<String>> {
        let reach = reachability(&self.b);
        self.observed
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let anc = (0..self.p()).filter(|&j| reach[j][i]).map(|j| self.observed[j].clone()).collect();
                (l.clone(), anc)
            })
            .collect()
    }

    fn latent_parents(&self, i: usize) -> BTreeSet<usize> {
        (0..self.latents.len()).filter(|&k| self.lambda[i][k] != 0.0).collect()
    }

    fn skeleton_components(&self) -> Vec<usize> {
        let p = self.p();
        let mut comp: Vec<usize> = (0..p).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while c[r] != r {
                r = c[r];
            }
            c[x] = r;
            r
        }
        for i in 0..p {
            for j in 0..p {
                if self.b[i][j] != 0.0 {
                    let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                    comp[a] = b;
                }
            }
        }
        (0..p).map(|i| find(&mut comp, i)).collect()
    }

    /// Every latent has a pure set of children once the latents handled before it are removed.
    ///
    /// A set is pure for `L` when it is a connected component of the
    /// observed skeleton whose members are children of `L` with no other
    /// latent parent except ones already accounted for.
    pub fn satisfies_pure_sets(&self) -> bool {
        let comp = self.skeleton_components();
        let mut done: BTreeSet<usize> = BTreeSet::new();
        let m = self.latents.len();
        while done.len() < m {
            let next = (0..m).filter(|k| !done.contains(k)).find(|&k| {
                let allowed: BTreeSet<usize> = done.iter().copied().chain([k]).collect();
                let eligible: BTreeSet<usize> = (0..self.p())
                    .filter(|&i| {
                        let lp = self.latent_parents(i);
                        lp.contains(&k) && lp.is_subset(&allowed)
                    })
                    .collect();
                eligible.iter().any(|&i| (0..self.p()).filter(|&j| comp[j] == comp[i]).all(|j| eligible.contains(&j)))
            });
            match next {
                Some(k) => {
                    done.insert(k);
                }
                None => return false,
            }
        }
        true
    }

    /// Every latent has at least three observed children.
    pub fn satisfies_three_children(&self) -> bool {
        (0..self.latents.len()).all(|k| (0..self.p()).filter(|&i| self.lambda[i][k] != 0.0).count() >= 3)
    }
}

fn reachability(b: &[Vec<f64>]) -> Vec<Vec<bool>> {
    let p = b.len();
    let mut r = vec![vec![false; p]; p];
    for i in 0..p {
        for j in 0..p {
            if b[i][j] != 0.0 {
                r[j][i] = true;
            }
        }
    }
    for k in 0..p {
        for i in 0..p {
            if r[i][k] {
                for j in 0..p {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// `[(I - B)^-1 Lambda | (I - B)^-1]` with labeled columns.
pub fn ground_truth_mixing(spec: &ModelSpec) -> MixingMatrix {
    let t = spec.total_effects();
    let al = &t * spec.lambda_matrix();
    let p = spec.p();
    let mut columns: Vec<Component> = spec.latents.iter().map(|l| Component::LatentConfounder(l.clone())).collect();
    columns.extend(spec.observed.iter().map(|o| Component::ObservedNoise(o.clone())));
    let entries: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = (0..spec.latents.len()).map(|k| al[(i, k)]).collect();
            row.extend((0..p).map(|j| t[(i, j)]));
            row
        })
        .collect();
    MixingMatrix {
        rows: spec.observed.clone(),
        estimated_mask: vec![vec![true; columns.len()]; p],
        columns,
        entries,
    }
}

/// Draws `n` samples; each latent and noise has its own named random stream.
pub fn sample(spec: &ModelSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    spec.validate()?;
    let mix = ground_truth_mixing(spec);
    let mut sources: Vec<Vec<f64>> = Vec::with_capacity(mix.columns.len());
    for comp in &mix.columns {
        let (stream, standardize) = match comp {
            Component::LatentConfounder(l) => (format!("latent:{l}"), true),
            Component::ObservedNoise(o) => (format!("noise:{o}"), spec.standardize_noise),
        };
        let mut rng = seed::stream_rng(seed, &stream);
        sources.push((0..n).map(|_| spec.noise_kind.draw(&mut rng, standardize)).collect());
    }
    let columns: Vec<Vec<f64>> = mix
        .entries
        .iter()
        .map(|row| {
            let mut col = vec![0.0; n];
            for (w, src) in row.iter().zip(&sources) {
                if *w != 0.0 {
                    for (c, s) in col.iter_mut().zip(src) {
                        *c += w * s;
                    }
                }
            }
            col
        })
        .collect();
    Dataset::new(spec.observed.clone(), columns)
}

struct Structure {
    p: usize,
    latents: usize,
    latent_edges: Vec<(usize, usize)>,
    edges: Vec<(usize, usize)>,
}

impl Structure {
    fn remove_latent(&mut self, latent: usize, child: usize) {
        self.latent_edges.retain(|&e| e != (latent, child));
    }
    fn remove_edge(&mut self, from: usize, to: usize) {
        self.edges.retain(|&e| e != (from, to));
    }
}

fn case_structure(case_id: u32) -> Result<Structure> {
    // indices are zero-based: X1 is 0, L1 is 0
    let s = match case_id {
        1 => Structure { p: 3, latents: 1, latent_edges: vec![(0, 0), (0, 1), (0, 2)], edges: vec![] },
        2 => Structure { edges: vec![(1, 2)], ..case_structure(1)? },
        3 => {
            let mut s = case_structure(1)?;
            s.p = 4;
            s.latent_edges.push((0, 3));
            s.edges.extend([(0, 1), (2, 3)]);
            s
        }
        4 => {
            let mut s = case_structure(2)?;
            s.p = 4;
            s.latent_edges.push((0, 3));
            s.edges.push((2, 3));
            s
        }
        5 => {
            let mut s = case_structure(1)?;
            s.p = 4;
            s.latents = 2;
            s.latent_edges.extend([(1, 1), (1, 2), (1, 3)]);
            s
        }
        6 => {
            let mut s = case_structure(5)?;
            s.edges.push((1, 2));
            s.latent_edges.push((0, 3));
            s
        }
        7 => Structure {
            p: 6,
            latents: 2,
            latent_edges: vec![(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 3), (1, 4), (1, 5)],
            edges: vec![(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)],
        },
        8 => {
            let mut s = case_structure(7)?;
            s.remove_latent(1, 3);
            s
        }
        9 => {
            let mut s = case_structure(8)?;
            s.remove_edge(2, 4);
            s.edges.push((4, 5));
            s
        }
        10 => {
            let mut s = case_structure(9)?;
            s.remove_edge(1, 3);
            s.edges.push((0, 1));
            s
        }
        other => return Err(Error::InvalidArgument(format!("case id {other} outside 1..=10"))),
    };
    Ok(s)
}

fn assemble(s: &Structure, noise_kind: NoiseKind, seed: u64) -> Result<ModelSpec> {
    let mut rng = seed::stream_rng(seed, "coefficients");
    let mut lambda = vec![vec![0.0; s.latents]; s.p];
    let mut latent_edges = s.latent_edges.clone();
    latent_edges.sort_unstable();
    for &(k, i) in &latent_edges {
        lambda[i][k] = rng.random_range(0.2..0.8);
    }
    let mut b = vec![vec![0.0; s.p]; s.p];
    let mut edges = s.edges.clone();
    edges.sort_unstable();
    for &(from, to) in &edges {
        b[to][from] = rng.random_range(0.2..0.8);
    }
    ModelSpec::new(
        (1..=s.p).map(|i| format!("X{i}")).collect(),
        (1..=s.latents).map(|k| format!("L{k}")).collect(),
        b,
        lambda,
        noise_kind,
    )
}

/// One of the ten benchmark structures with coefficients from `U[0.2, 0.8]`.
pub fn build_case(case_id: u32, seed: u64) -> Result<ModelSpec> {
    assemble(&case_structure(case_id)?, NoiseKind::CubedGaussian, seed)
}

/// Random model with one isolated pure child per latent and at least two
/// further children each, plus a random DAG among the remaining variables.
pub fn random_model(p: usize, n_latents: usize, edge_density: f64, seed: u64) -> Result<ModelSpec> {
    if p < 3 || n_latents < 1 {
        return Err(Error::Constraint("need p >= 3 and at least one latent".into()));
    }
    if p < n_latents + 2 {
        return Err(Error::Constraint(format!(
            "{p} observed variables cannot give {n_latents} latents a pure child and three children each"
        )));
    }
    if !(0.0..=1.0).contains(&edge_density) {
        return Err(Error::InvalidArgument(format!("edge density {edge_density} outside [0, 1]")));
    }
    let mut rng = seed::stream_rng(seed, "structure");
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let (pure, rest) = order.split_at(n_latents);
    let mut latent_edges = Vec::new();
    for (k, &c) in pure.iter().enumerate() {
        latent_edges.push((k, c));
        let extra = rng.random_range(2..=rest.len());
        let mut pool = rest.to_vec();
        pool.shuffle(&mut rng);
        for &c in &pool[..extra] {
            latent_edges.push((k, c));
        }
    }
    let mut edges = Vec::new();
    for a in 0..rest.len() {
        for bi in (a + 1)..rest.len() {
            if rng.random::<f64>() < edge_density {
                edges.push((rest[a], rest[bi]));
            }
        }
    }
    let s = Structure { p, latents: n_latents, latent_edges, edges };
    assemble(&s, NoiseKind::CubedGaussian, seed)
}
