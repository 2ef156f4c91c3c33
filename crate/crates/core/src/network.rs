//! In-process K-agent episodes.
//!
//! Every cross-agent value goes through the same path it would take on a
//! network: models are quantized, serialized, counted in the ledger and
//! decoded by the receiver; FastLSU counts are charged per round.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    bh_pooled, ceil_log2, fastlsu, score_metrics, ErrorMetrics, IterationLog, Level,
    PValueVector, RejectionSet, TestId,
};
use crate::error::{Error, Result};
use crate::quantization::{
    dequantize, deserialize, quantize_model, serialize, CommLedger, PayloadKind, QuantSpec,
};
use crate::scoring::{
    build_pu_dataset, train_score_model, Composite, ForestConfig, PuDataset, ScoreModel,
    ScoredBlock, Scorer,
};
use crate::seed::{derive, TAG_PU, TAG_SPLIT, TAG_TRAIN};

/// One agent's private data. `novelty[i]` is the hidden label of
/// `tests[i]` and is read only when scoring outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDataset {
    pub agent_id: usize,
    pub nulls: Vec<Vec<f64>>,
    pub tests: Vec<Vec<f64>>,
    pub novelty: Vec<bool>,
}

impl AgentDataset {
    pub fn dim(&self) -> Result<usize> {
        self.nulls
            .first()
            .or(self.tests.first())
            .map(Vec::len)
            .ok_or_else(|| Error::InsufficientData(format!("agent {} has no data", self.agent_id)))
    }

    fn check(&self) -> Result<()> {
        if self.tests.len() != self.novelty.len() {
            return Err(Error::InvalidInput(format!(
                "agent {}: {} tests but {} labels",
                self.agent_id,
                self.tests.len(),
                self.novelty.len()
            )));
        }
        Ok(())
    }
}

/// Indices into an agent's nulls and tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub nulls: Vec<usize>,
    pub tests: Vec<usize>,
}

impl Block {
    fn whole(data: &AgentDataset) -> Self {
        Self {
            nulls: (0..data.nulls.len()).collect(),
            tests: (0..data.tests.len()).collect(),
        }
    }
}

/// Partitions an agent's data into `agents` disjoint blocks; block `r` is
/// designated for agent `r` and the agent's own block is kept for local
/// evaluation. Points are shuffled then dealt round-robin starting at the
/// reserved block, so that block absorbs any remainder first. With one
/// agent the single block keeps the original order.
pub fn split_blocks(data: &AgentDataset, agents: usize, seed: u64) -> Result<Vec<Block>> {
    if agents == 0 {
        return Err(Error::InvalidConfig("at least one agent is required".into()));
    }
    let (n, m) = (data.nulls.len(), data.tests.len());
    if n / agents < 4 || m / agents < 1 {
        return Err(Error::InsufficientData(format!(
            "agent {}: {n} nulls and {m} tests cannot fill {agents} blocks",
            data.agent_id
        )));
    }
    if agents == 1 {
        return Ok(vec![Block::whole(data)]);
    }
    let reserved = data.agent_id % agents;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deal = |len: usize| {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        let mut piles = vec![Vec::new(); agents];
        for (i, idx) in order.into_iter().enumerate() {
            piles[(reserved + i) % agents].push(idx);
        }
        piles
    };
    let nulls = deal(n);
    let tests = deal(m);
    Ok(nulls
        .into_iter()
        .zip(tests)
        .map(|(nulls, tests)| Block { nulls, tests })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Local tests at `α/K`, no communication.
    B2,
    /// Local models, FastLSU at `α`.
    B3,
    /// Block-wise model exchange, FastLSU at `α`.
    Me,
    /// Unsplit model broadcast, local BH at `α/K`.
    MeConservative,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::B2, Method::B3, Method::Me, Method::MeConservative];

    pub fn exchanges_models(self) -> bool {
        matches!(self, Method::Me | Method::MeConservative)
    }

    /// Stable tag for seed derivation.
    pub(crate) fn tag(self) -> u64 {
        match self {
            Method::B2 => 2,
            Method::B3 => 3,
            Method::Me => 10,
            Method::MeConservative => 11,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::B2 => "B2",
            Method::B3 => "B3",
            Method::Me => "ME",
            Method::MeConservative => "ME-conservative",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "b2" => Ok(Method::B2),
            "b3" => Ok(Method::B3),
            "me" => Ok(Method::Me),
            "me-conservative" | "conservative" | "me-cons" => Ok(Method::MeConservative),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub agents: usize,
    pub alpha: Level,
    pub method: Method,
    pub quant: QuantSpec,
    pub forest: ForestConfig,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            agents: 3,
            alpha: Ratio::new(1, 10),
            method: Method::Me,
            quant: QuantSpec::none(),
            forest: ForestConfig::default(),
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::InvalidConfig("at least one agent is required".into()));
        }
        if *self.alpha.numer() == 0 || self.alpha.numer() >= self.alpha.denom() {
            return Err(Error::InvalidConfig(format!("level {} outside (0, 1)", self.alpha)));
        }
        if self.quant.bits.is_some() && !self.method.exchanges_models() {
            return Err(Error::InvalidConfig(format!(
                "{} exchanges no models, so it takes no quantization",
                self.method
            )));
        }
        self.quant.validate()?;
        self.forest.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    fn alpha_over_k(&self) -> Level {
        self.alpha / Ratio::from_integer(self.agents as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub method: Method,
    pub per_agent: Vec<ErrorMetrics>,
    pub global: ErrorMetrics,
    pub rejections: RejectionSet,
    pub ledger: CommLedger,
    /// Count exchanges FastLSU used; zero for methods that do not run it.
    pub fastlsu_rounds: usize,
    pub fastlsu_log: Option<IterationLog>,
    /// Largest per-agent test count, the `m` of the FastLSU bit accounting.
    pub fastlsu_m: usize,
    /// Wire size of every exchanged model, in transfer order.
    pub model_payload_bytes: Vec<usize>,
}

impl TrialOutcome {
    pub fn comm_kb(&self) -> f64 {
        self.ledger.total_kb()
    }
}

fn pu_seed(seed: u64, agent: usize, block: usize) -> u64 {
    derive(seed, &[TAG_PU, agent as u64, block as u64])
}

fn train_seed(seed: u64, agent: usize, block: usize) -> u64 {
    derive(seed, &[TAG_TRAIN, agent as u64, block as u64])
}

/// PU dataset and model of `agent` on `block`.
fn fit(
    config: &EpisodeConfig,
    data: &AgentDataset,
    block: &Block,
    block_id: usize,
) -> Result<(PuDataset, ScoreModel)> {
    let nulls: Vec<Vec<f64>> = block.nulls.iter().map(|&i| data.nulls[i].clone()).collect();
    let tests: Vec<Vec<f64>> = block.tests.iter().map(|&i| data.tests[i].clone()).collect();
    let pu = build_pu_dataset(
        &nulls,
        &tests,
        config.train_fraction,
        pu_seed(config.seed, data.agent_id, block_id),
    )?;
    let model = train_score_model(
        &pu,
        &config.forest,
        train_seed(config.seed, data.agent_id, block_id),
    )?;
    Ok((pu, model))
}

/// Quantizes, serializes and delivers `model` from `from` to `to`.
fn transmit(
    config: &EpisodeConfig,
    model: &ScoreModel,
    from: usize,
    to: usize,
    ledger: &mut CommLedger,
    sizes: &mut Vec<usize>,
) -> Result<ScoreModel> {
    let bytes = serialize(&quantize_model(model, config.quant)?);
    ledger.record_bytes(from, to, PayloadKind::ModelExchange, bytes.len());
    sizes.push(bytes.len());
    dequantize(&deserialize(&bytes)?, model.dim)
}

/// P-values of `pu`'s tests under `scorer`, re-indexed to the agent's
/// original test positions.
fn pvalues(
    agent: usize,
    pu: &PuDataset,
    scorer: &dyn Scorer,
    block: &Block,
) -> Result<PValueVector> {
    let scored = ScoredBlock::score(pu, scorer)?;
    let index = scored.test_index.iter().map(|&t| block.tests[t]).collect();
    PValueVector::from_scores(agent, &scored.calibration_scores, &scored.test_scores, index)
}

fn truth(data: &AgentDataset, block: &Block) -> HashMap<TestId, bool> {
    block
        .tests
        .iter()
        .map(|&i| (TestId::new(data.agent_id, i), data.novelty[i]))
        .collect()
}

fn check_agents(config: &EpisodeConfig, data: &[AgentDataset]) -> Result<usize> {
    config.validate()?;
    if data.len() != config.agents {
        return Err(Error::InvalidConfig(format!(
            "{} agents configured, {} datasets given",
            config.agents,
            data.len()
        )));
    }
    let mut dim = None;
    for (k, agent) in data.iter().enumerate() {
        agent.check()?;
        if agent.agent_id != k {
            return Err(Error::InvalidInput(format!(
                "dataset {k} carries agent id {}",
                agent.agent_id
            )));
        }
        let d = agent.dim()?;
        if *dim.get_or_insert(d) != d {
            return Err(Error::InvalidInput("agents disagree on dimension".into()));
        }
    }
    Ok(dim.unwrap_or(0))
}

/// Per-round FastLSU traffic: each agent sends its local count to the
/// coordinator (agent 0), which sends the global count back.
fn charge_fastlsu(ledger: &mut CommLedger, log: &IterationLog, agents: usize, m: usize) {
    if agents < 2 {
        return;
    }
    let up = ceil_log2(m as u64 + 1);
    let down = ceil_log2((agents * m) as u64 + 1);
    for _ in &log.rounds {
        for j in 0..agents {
            ledger.record_bits(j, 0, PayloadKind::FastLsuCounts, up);
            ledger.record_bits(0, j, PayloadKind::FastLsuCounts, down);
        }
    }
}

fn bits_key(point: &[f64]) -> Vec<u64> {
    point.iter().map(|x| x.to_bits()).collect()
}

/// Fails if any point of a reserved evaluation block appears in the
/// training data of a model that left its agent.
fn hygiene(reserved: &[HashSet<Vec<u64>>], outgoing: &[(usize, &PuDataset)]) -> Result<()> {
    for &(sender, pu) in outgoing {
        for point in pu.train_nulls.iter().chain(&pu.unlabeled_mix) {
            let key = bits_key(point);
            if let Some(owner) = reserved.iter().position(|set| set.contains(&key)) {
                return Err(Error::Hygiene(format!(
                    "a reserved point of agent {owner} trained a model sent by agent {sender}"
                )));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    config: &EpisodeConfig,
    data: &[AgentDataset],
    blocks: &[Block],
    rejections: RejectionSet,
    ledger: CommLedger,
    fastlsu_log: Option<IterationLog>,
    fastlsu_m: usize,
    model_payload_bytes: Vec<usize>,
) -> Result<TrialOutcome> {
    let per_agent = data
        .iter()
        .zip(blocks)
        .map(|(agent, block)| {
            let truth = truth(agent, block);
            let mine = RejectionSet {
                rejected: rejections
                    .rejected
                    .iter()
                    .filter(|id| id.agent == agent.agent_id)
                    .copied()
                    .collect(),
                threshold: rejections.threshold,
            };
            score_metrics(&mine, &truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialOutcome {
        method: config.method,
        global: ErrorMetrics::pooled(&per_agent),
        per_agent,
        rejections,
        ledger,
        fastlsu_rounds: fastlsu_log.as_ref().map_or(0, IterationLog::round_count),
        fastlsu_log,
        fastlsu_m,
        model_payload_bytes,
    })
}

/// Local BH at `level` on each agent's p-values; the union is returned.
fn local_bh(vectors: &[PValueVector], level: Level) -> Result<RejectionSet> {
    let mut all = RejectionSet::empty();
    for v in vectors {
        all.merge(bh_pooled(std::slice::from_ref(v), level)?);
    }
    Ok(all)
}

/// Block-wise model exchange with FastLSU at `α`.
pub fn run_model_exchange(config: &EpisodeConfig, data: &[AgentDataset]) -> Result<TrialOutcome> {
    let dim = check_agents(config, data)?;
    let k = config.agents;
    let blocks = data
        .iter()
        .map(|a| split_blocks(a, k, derive(config.seed, &[TAG_SPLIT, a.agent_id as u64])))
        .collect::<Result<Vec<_>>>()?;

    let mut ledger = CommLedger::new();
    let mut sizes = Vec::new();
    // received[j]: surrogates agent j holds, in sender order
    let mut received: Vec<Vec<ScoreModel>> = vec![Vec::new(); k];
    let mut outgoing = Vec::new();
    for a in 0..k {
        for j in (0..k).filter(|&j| j != a) {
            let (pu, model) = fit(config, &data[a], &blocks[a][j], j)?;
            received[j].push(transmit(config, &model, a, j, &mut ledger, &mut sizes)?);
            outgoing.push((a, pu));
        }
    }

    let mut locals = Vec::with_capacity(k);
    for j in 0..k {
        locals.push(fit(config, &data[j], &blocks[j][j], j)?);
    }
    let reserved: Vec<HashSet<Vec<u64>>> = locals
        .iter()
        .map(|(pu, _)| pu.unlabeled_mix.iter().map(|p| bits_key(p)).collect())
        .collect();
    let outgoing_refs: Vec<(usize, &PuDataset)> = outgoing.iter().map(|(a, pu)| (*a, pu)).collect();
    hygiene(&reserved, &outgoing_refs)?;

    let vectors = locals
        .iter()
        .enumerate()
        .map(|(j, (pu, local))| {
            let composite = Composite {
                local,
                remotes: received[j].iter().map(|m| m as &dyn Scorer).collect(),
            };
            debug_assert_eq!(composite.dim(), dim);
            pvalues(j, pu, &composite, &blocks[j][j])
        })
        .collect::<Result<Vec<_>>>()?;

    let m = vectors.iter().map(PValueVector::len).max().unwrap_or(0);
    let outcome = fastlsu(&vectors, config.alpha)?;
    charge_fastlsu(&mut ledger, &outcome.log, k, m);
    let evaluated: Vec<Block> = (0..k).map(|j| blocks[j][j].clone()).collect();
    finish(config, data, &evaluated, outcome.rejections, ledger, Some(outcome.log), m, sizes)
}

/// Full-data local models and their p-values, one per agent.
fn local_pvalues(
    config: &EpisodeConfig,
    data: &[AgentDataset],
) -> Result<(Vec<Block>, Vec<PValueVector>)> {
    let blocks: Vec<Block> = data.iter().map(Block::whole).collect();
    let vectors = data
        .iter()
        .zip(&blocks)
        .map(|(agent, block)| {
            let (pu, model) = fit(config, agent, block, agent.agent_id)?;
            pvalues(agent.agent_id, &pu, &model, block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((blocks, vectors))
}

/// Zero-communication baseline: local BH at `α/K`.
pub fn run_b2(config: &EpisodeConfig, data: &[AgentDataset]) -> Result<TrialOutcome> {
    check_agents(config, data)?;
    let (blocks, vectors) = local_pvalues(config, data)?;
    let rejections = local_bh(&vectors, config.alpha_over_k())?;
    finish(config, data, &blocks, rejections, CommLedger::new(), None, 0, Vec::new())
}

/// Limited-communication baseline: local models, FastLSU at `α`.
pub fn run_b3(config: &EpisodeConfig, data: &[AgentDataset]) -> Result<TrialOutcome> {
    check_agents(config, data)?;
    let (blocks, vectors) = local_pvalues(config, data)?;
    let m = vectors.iter().map(PValueVector::len).max().unwrap_or(0);
    let outcome = fastlsu(&vectors, config.alpha)?;
    let mut ledger = CommLedger::new();
    charge_fastlsu(&mut ledger, &outcome.log, config.agents, m);
    finish(config, data, &blocks, outcome.rejections, ledger, Some(outcome.log), m, Vec::new())
}

/// Unsplit broadcast: every agent trains once on all its data and sends the
/// model to all others; each tests locally with BH at `α/K`.
pub fn run_conservative(config: &EpisodeConfig, data: &[AgentDataset]) -> Result<TrialOutcome> {
    check_agents(config, data)?;
    let k = config.agents;
    let blocks: Vec<Block> = data.iter().map(Block::whole).collect();
    let fitted = data
        .iter()
        .zip(&blocks)
        .map(|(agent, block)| fit(config, agent, block, agent.agent_id))
        .collect::<Result<Vec<_>>>()?;

    let mut ledger = CommLedger::new();
    let mut sizes = Vec::new();
    let mut received: Vec<Vec<ScoreModel>> = vec![Vec::new(); k];
    for (a, (_, model)) in fitted.iter().enumerate() {
        for j in (0..k).filter(|&j| j != a) {
            received[j].push(transmit(config, model, a, j, &mut ledger, &mut sizes)?);
        }
    }

    let vectors = fitted
        .iter()
        .enumerate()
        .map(|(j, (pu, local))| {
            let composite = Composite {
                local,
                remotes: received[j].iter().map(|m| m as &dyn Scorer).collect(),
            };
            pvalues(j, pu, &composite, &blocks[j])
        })
        .collect::<Result<Vec<_>>>()?;
    let rejections = local_bh(&vectors, config.alpha_over_k())?;
    finish(config, data, &blocks, rejections, ledger, None, 0, sizes)
}

pub fn run_episode(config: &EpisodeConfig, data: &[AgentDataset]) -> Result<TrialOutcome> {
    match config.method {
        Method::B2 => run_b2(config, data),
        Method::B3 => run_b3(config, data),
        Method::Me => run_model_exchange(config, data),
        Method::MeConservative => run_conservative(config, data),
    }
}
