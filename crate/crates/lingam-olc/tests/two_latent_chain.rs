//! Five observed variables, two latents and the chain X1 -> X2 -> X3.

use lingam_olc::eval::latent_match;
use lingam_olc::simulate::{sample, NoiseKind};
use lingam_olc::{discover, Config, ModelSpec};

fn model() -> ModelSpec {
    let labels = |p: &str, n: usize| (1..=n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let mut b = vec![vec![0.0; 5]; 5];
    b[1][0] = 0.7;
    b[2][1] = 0.6;
    let lambda = vec![vec![0.7, 0.6], vec![0.6, 0.7], vec![0.8, 0.5], vec![0.7, 0.0], vec![0.6, 0.8]];
    ModelSpec::new(labels("X", 5), labels("L", 2), b, lambda, NoiseKind::CubedGaussian).unwrap()
}

#[test]
fn recovers_latent_structure_and_chain_direction() {
    let spec = model();
    let truth = spec.truth_graph();
    let data = sample(&spec, 5000, 0).unwrap();
    let (g, mixing) = discover(&data, &Config::default()).unwrap();
    assert!(g.validate().is_ok());
    assert_eq!(latent_match(&g, &truth).matched, 2, "{g:?}");
    assert!(g.has_directed("X1", "X2"), "{g:?}");
    assert!(g.has_directed("X2", "X3"), "{g:?}");
    assert!(!g.has_directed("X2", "X1") && !g.has_directed("X3", "X2"));
    assert!(g.non_adjacent("X4", "X5") && g.non_adjacent("X1", "X4"));
    assert_eq!(mixing.latent_ids().len(), 2);
    let coef = g.directed_edges.iter().find(|e| e.from == "X1" && e.to == "X2").and_then(|e| e.coef).unwrap();
    assert!((coef - 0.7).abs() < 0.15, "{coef}");
}

#[test]
fn the_larger_latent_is_found_across_seeds() {
    let spec = model();
    let truth = spec.truth_graph();
    for seed in 1..3 {
        let data = sample(&spec, 5000, seed).unwrap();
        let (g, _) = discover(&data, &Config { seed, ..Default::default() }).unwrap();
        assert!(latent_match(&g, &truth).matched >= 1, "seed {seed}: {g:?}");
        assert!(!g.has_directed("X2", "X1") && !g.has_directed("X3", "X2"), "seed {seed}: {g:?}");
    }
}
