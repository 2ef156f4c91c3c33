#![allow(dead_code)]

use num_rational::Ratio;
use novex_core::scoring::{Node, Tree};
use novex_core::{
    generate, AgentDataset, EpisodeConfig, ForestConfig, Level, Method, PValue, PValueVector,
    QuantSpec, ScoreModel, SynthConfig, TestId,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// BH computed straight from the definition: the largest `k` with at least
/// `k` pooled p-values at or below `αk/M`, compared by cross-multiplication.
pub fn bh_oracle(vectors: &[PValueVector], alpha: Level) -> BTreeSet<TestId> {
    let all: Vec<(TestId, PValue)> = vectors
        .iter()
        .flat_map(|v| {
            v.test_index
                .iter()
                .zip(&v.pvals)
                .map(move |(&i, &p)| (TestId::new(v.agent_id, i), p))
        })
        .collect();
    let m = all.len() as u128;
    let (an, ad) = (*alpha.numer() as u128, *alpha.denom() as u128);
    // p <= α k / M  <=>  p.n * ad * M <= an * k * p.d
    let below = |p: &PValue, k: u128| (*p.numer() as u128) * ad * m <= an * k * (*p.denom() as u128);
    let k_hat = (1..=m)
        .rev()
        .find(|&k| all.iter().filter(|(_, p)| below(p, k)).count() as u128 >= k)
        .unwrap_or(0);
    if k_hat == 0 {
        return BTreeSet::new();
    }
    all.iter()
        .filter(|(_, p)| below(p, k_hat))
        .map(|(id, _)| *id)
        .collect()
}

/// Random conformal-style p-values `j/(ℓ+1)` for up to `max_agents` agents.
pub fn random_instance(rng: &mut ChaCha8Rng, max_agents: usize, max_m: usize) -> Vec<PValueVector> {
    let k = rng.random_range(1..=max_agents);
    loop {
        let vectors: Vec<PValueVector> = (0..k)
            .map(|a| {
                let m = rng.random_range(0..=max_m);
                let ell: u64 = rng.random_range(1..=200);
                let pvals = (0..m)
                    .map(|_| {
                        // skew towards small p-values so rejections happen
                        let j = if rng.random_bool(0.3) {
                            rng.random_range(1..=(ell + 1).min(5))
                        } else {
                            rng.random_range(1..=ell + 1)
                        };
                        Ratio::new(j, ell + 1)
                    })
                    .collect();
                PValueVector::new(a, pvals, (0..m).collect()).unwrap()
            })
            .collect();
        if vectors.iter().any(|v| !v.is_empty()) {
            return vectors;
        }
    }
}

/// A forest of random well-formed trees over `dim` features.
pub fn random_model(rng: &mut ChaCha8Rng, dim: usize) -> ScoreModel {
    let tree_count = rng.random_range(1..=6);
    let trees = (0..tree_count)
        .map(|_| {
            let splits = rng.random_range(0..=12);
            let mut nodes = vec![Node::leaf(0.0)];
            let mut leaves = vec![0usize];
            for _ in 0..splits {
                let at = leaves.swap_remove(rng.random_range(0..leaves.len()));
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes[at] = Node::split(rng.random_range(0..dim) as u16, 0.0, l as u16, r as u16);
                nodes.push(Node::leaf(0.0));
                nodes.push(Node::leaf(0.0));
                leaves.extend([l, r]);
            }
            let scale = 10f64.powi(rng.random_range(-3..=3));
            for node in &mut nodes {
                node.value = rng.random_range(-1.0..1.0) * scale;
            }
            Tree { nodes }
        })
        .collect();
    ScoreModel::from_trees(dim, trees, 0).unwrap()
}

/// A scaled-down benchmark that keeps every block large enough to split.
pub fn small_synth(delta: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        delta,
        n_train_total: 360,
        n_test_total: 180,
        seed,
        ..SynthConfig::default()
    }
}

pub fn small_data(delta: f64, seed: u64) -> Vec<AgentDataset> {
    generate(&small_synth(delta, seed)).unwrap()
}

pub fn small_episode(method: Method, quant: QuantSpec, seed: u64) -> EpisodeConfig {
    EpisodeConfig {
        method,
        quant,
        forest: ForestConfig {
            trees: 15,
            max_depth: 6,
            ..ForestConfig::default()
        },
        seed,
        ..EpisodeConfig::default()
    }
}
