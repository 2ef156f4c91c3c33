//! Learned non-conformity scores.

mod dataset;
mod forest;

pub use dataset::{build_pu_dataset, MixSource, PuDataset};
pub use forest::{
    train_score_model, ForestConfig, LearnerId, Node, ScoreModel, Tree, LEAF, MAX_DEPTH_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that maps a point to a real non-conformity score.
pub trait Scorer: Send + Sync {
    fn dim(&self) -> usize;
    fn score(&self, point: &[f64]) -> Result<f64>;
}

/// `max` of the local score and every remote surrogate's score at `point`.
pub fn composite_score(local: &dyn Scorer, remotes: &[&dyn Scorer], point: &[f64]) -> Result<f64> {
    let mut best = local.score(point)?;
    for remote in remotes {
        if remote.dim() != point.len() {
            return Err(Error::InvalidInput(format!(
                "remote scorer expects dimension {}, point has {}",
                remote.dim(),
                point.len()
            )));
        }
        best = best.max(remote.score(point)?);
    }
    Ok(best)
}

/// A local scorer combined with remote surrogates.
pub struct Composite<'a> {
    pub local: &'a dyn Scorer,
    pub remotes: Vec<&'a dyn Scorer>,
}

impl Scorer for Composite<'_> {
    fn dim(&self) -> usize {
        self.local.dim()
    }

    fn score(&self, point: &[f64]) -> Result<f64> {
        composite_score(self.local, &self.remotes, point)
    }
}

/// Scores of one PU dataset's calibration nulls and test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBlock {
    pub calibration_scores: Vec<f64>,
    pub test_scores: Vec<f64>,
    /// Original test indices, aligned with `test_scores`.
    pub test_index: Vec<usize>,
}

impl ScoredBlock {
    pub fn score(data: &PuDataset, scorer: &dyn Scorer) -> Result<Self> {
        let calibration_scores = data
            .calibration()
            .into_iter()
            .map(|(_, p)| scorer.score(p))
            .collect::<Result<_>>()?;
        let tests = data.tests();
        let test_scores = tests
            .iter()
            .map(|&(_, p)| scorer.score(p))
            .collect::<Result<_>>()?;
        Ok(Self {
            calibration_scores,
            test_scores,
            test_index: tests.into_iter().map(|(i, _)| i).collect(),
        })
    }
}
