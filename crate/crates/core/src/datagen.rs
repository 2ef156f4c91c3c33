//! Gaussian benchmark: agent nulls centered on a regular polygon of radius
//! `δ` (a triangle for three agents) and a shared sparse-mean-shift novelty
//! distribution.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::AgentDataset;
use crate::seed::{derive, TAG_DATA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub d: usize,
    pub agents: usize,
    pub delta: f64,
    /// Fraction of each agent's test points that are nulls.
    pub pi0: f64,
    pub n_train_total: usize,
    pub n_test_total: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 20,
            agents: 3,
            delta: 0.0,
            pi0: 0.6,
            n_train_total: 3000,
            n_test_total: 1000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 5 {
            return Err(Error::InvalidConfig(format!(
                "dimension {} is below 5, the support of the novelty shift",
                self.d
            )));
        }
        if self.agents == 0 {
            return Err(Error::InvalidConfig("at least one agent is required".into()));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidConfig("shift must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(Error::InvalidConfig(format!("pi0 {} outside [0, 1]", self.pi0)));
        }
        if self.n_train_total < self.agents || self.n_test_total < self.agents {
            return Err(Error::InvalidConfig(
                "every agent needs at least one null and one test point".into(),
            ));
        }
        Ok(())
    }

    /// Nulls in a test sample of size `m`.
    pub fn null_count(&self, m: usize) -> usize {
        ((self.pi0 * m as f64) + 1e-9).floor().min(m as f64) as usize
    }
}

/// Agent `k`'s share of `total` points: `⌈total/K⌉` each, the last agents
/// taking whatever remains.
pub fn share(total: usize, agents: usize, k: usize) -> usize {
    let chunk = total.div_ceil(agents);
    total.saturating_sub(k * chunk).min(chunk)
}

/// Unit directions `u` (first `⌊d/2⌋` coordinates) and `v` (the rest).
fn directions(d: usize) -> (Vec<f64>, Vec<f64>) {
    let h = d / 2;
    let (a, b) = (1.0 / (h as f64).sqrt(), 1.0 / ((d - h) as f64).sqrt());
    let u = (0..d).map(|i| if i < h { a } else { 0.0 }).collect();
    let v = (0..d).map(|i| if i < h { 0.0 } else { b }).collect();
    (u, v)
}

/// Null means `μ_k = δ(cos θ_k · u + sin θ_k · v)` with `θ_k = 2πk/K`.
pub fn centroids(config: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    if config.d < 2 {
        return Err(Error::InvalidConfig("centroids need d >= 2".into()));
    }
    if config.agents == 0 {
        return Err(Error::InvalidConfig("at least one agent is required".into()));
    }
    let (u, v) = directions(config.d);
    let half_sqrt3 = 3f64.sqrt() / 2.0;
    Ok((0..config.agents)
        .map(|k| {
            let (c, s) = match (config.agents, k) {
                // exact triangle coefficients
                (3, 0) => (1.0, 0.0),
                (3, 1) => (-0.5, half_sqrt3),
                (3, 2) => (-0.5, -half_sqrt3),
                _ => {
                    let theta = 2.0 * PI * k as f64 / config.agents as f64;
                    (theta.cos(), theta.sin())
                }
            };
            u.iter()
                .zip(&v)
                .map(|(ui, vi)| config.delta * (c * ui + s * vi))
                .collect()
        })
        .collect())
}

/// Novelty mean: `√(2 ln d)` on the first five coordinates, zero elsewhere.
pub fn novelty_mean(config: &SynthConfig) -> Result<Vec<f64>> {
    if config.d < 5 {
        return Err(Error::InvalidConfig("novelty shift needs d >= 5".into()));
    }
    let shift = (2.0 * (config.d as f64).ln()).sqrt();
    Ok((0..config.d).map(|i| if i < 5 { shift } else { 0.0 }).collect())
}

fn draw(mean: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter()
        .map(|mu| {
            let z: f64 = StandardNormal.sample(rng);
            mu + z
        })
        .collect()
}

/// Samples every agent's training nulls and labeled test sample. Each agent
/// draws from its own seeded stream.
pub fn generate(config: &SynthConfig) -> Result<Vec<AgentDataset>> {
    config.validate()?;
    let means = centroids(config)?;
    let alt = novelty_mean(config)?;
    Ok((0..config.agents)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[TAG_DATA, k as u64]));
            let n = share(config.n_train_total, config.agents, k);
            let m = share(config.n_test_total, config.agents, k);
            let nulls = (0..n).map(|_| draw(&means[k], &mut rng)).collect();
            let mut novelty = vec![false; m];
            novelty[config.null_count(m)..].fill(true);
            novelty.shuffle(&mut rng);
            let tests = novelty
                .iter()
                .map(|&is_novel| draw(if is_novel { &alt } else { &means[k] }, &mut rng))
                .collect();
            AgentDataset {
                agent_id: k,
                nulls,
                tests,
                novelty,
            }
        })
        .collect())
}

/// Writes one CSV row per point: `agent,role,label,x0..x{d-1}` with role
/// `train` or `test` and label `0` (null) or `1` (novelty).
pub fn write_csv<W: Write>(datasets: &[AgentDataset], out: W) -> Result<()> {
    let d = datasets
        .iter()
        .flat_map(|a| a.nulls.iter().chain(&a.tests))
        .map(Vec::len)
        .next()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["agent".to_string(), "role".into(), "label".into()];
    header.extend((0..d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for agent in datasets {
        let rows = agent
            .nulls
            .iter()
            .map(|p| ("train", false, p))
            .chain(
                agent
                    .tests
                    .iter()
                    .zip(&agent.novelty)
                    .map(|(p, &n)| ("test", n, p)),
            );
        for (role, label, point) in rows {
            let mut record = vec![
                agent.agent_id.to_string(),
                role.to_string(),
                u8::from(label).to_string(),
            ];
            record.extend(point.iter().map(|x| x.to_string()));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}
