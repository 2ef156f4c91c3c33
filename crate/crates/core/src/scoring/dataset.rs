use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where an unlabeled point came from before the mix was canonicalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MixSource {
    /// Index into the null sample handed to [`build_pu_dataset`].
    Calibration(usize),
    /// Index into the test sample.
    Test(usize),
}

/// Positive-unlabeled training set: labeled nulls (class 0) against the
/// unordered mix of calibration nulls and test points (class 1).
///
/// The mix is stored in lexicographic order of its vectors, so anything
/// trained on it cannot depend on the order the mix was assembled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuDataset {
    pub train_nulls: Vec<Vec<f64>>,
    pub train_source: Vec<usize>,
    pub unlabeled_mix: Vec<Vec<f64>>,
    pub mix_source: Vec<MixSource>,
    pub cal_count: usize,
    pub dim: usize,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn common_dim<'a>(points: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<Option<usize>> {
    let mut dim = None;
    for p in points {
        match dim {
            None => dim = Some(p.len()),
            Some(d) if d != p.len() => {
                return Err(Error::InvalidInput(format!(
                    "dimension mismatch: {} vs {}",
                    d,
                    p.len()
                )))
            }
            _ => {}
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
    }
    Ok(dim)
}

impl PuDataset {
    /// Assembles a dataset from explicit parts and canonicalizes the mix.
    pub fn from_parts(
        train_nulls: Vec<Vec<f64>>,
        train_source: Vec<usize>,
        mix: Vec<(Vec<f64>, MixSource)>,
    ) -> Result<Self> {
        if train_nulls.len() != train_source.len() {
            return Err(Error::InvalidInput("train source length mismatch".into()));
        }
        let dim = common_dim(train_nulls.iter().chain(mix.iter().map(|(p, _)| p)))?
            .ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
        if dim == 0 {
            return Err(Error::InvalidInput("zero-dimensional points".into()));
        }
        let mut mix = mix;
        mix.sort_by(|(a, sa), (b, sb)| lexicographic(a, b).then(sa.cmp(sb)));
        let cal_count = mix
            .iter()
            .filter(|(_, s)| matches!(s, MixSource::Calibration(_)))
            .count();
        let (unlabeled_mix, mix_source) = mix.into_iter().unzip();
        Ok(Self {
            train_nulls,
            train_source,
            unlabeled_mix,
            mix_source,
            cal_count,
            dim,
        })
    }

    pub fn train_count(&self) -> usize {
        self.train_nulls.len()
    }

    pub fn test_count(&self) -> usize {
        self.unlabeled_mix.len() - self.cal_count
    }

    /// Calibration nulls ordered by their original null index.
    pub fn calibration(&self) -> Vec<(usize, &[f64])> {
        self.by_source(|s| match s {
            MixSource::Calibration(i) => Some(i),
            MixSource::Test(_) => None,
        })
    }

    /// Test points ordered by their original test index.
    pub fn tests(&self) -> Vec<(usize, &[f64])> {
        self.by_source(|s| match s {
            MixSource::Test(i) => Some(i),
            MixSource::Calibration(_) => None,
        })
    }

    fn by_source(&self, pick: impl Fn(MixSource) -> Option<usize>) -> Vec<(usize, &[f64])> {
        let mut out: Vec<(usize, &[f64])> = self
            .mix_source
            .iter()
            .zip(&self.unlabeled_mix)
            .filter_map(|(&s, p)| pick(s).map(|i| (i, p.as_slice())))
            .collect();
        out.sort_by_key(|&(i, _)| i);
        out
    }
}

/// Splits `nulls` by a seeded shuffle into `⌊train_fraction·n⌋` training
/// nulls and `ℓ` calibration nulls; the calibration nulls join every test
/// point in the unlabeled mix.
pub fn build_pu_dataset(
    nulls: &[Vec<f64>],
    tests: &[Vec<f64>],
    train_fraction: f64,
    seed: u64,
) -> Result<PuDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let n = nulls.len();
    let k = (train_fraction * n as f64 + 1e-9).floor() as usize;
    if n < 2 || k == 0 || k >= n {
        return Err(Error::InvalidSplit(format!(
            "{n} nulls at train fraction {train_fraction} leave {k} for training and {} for calibration",
            n.saturating_sub(k)
        )));
    }
    common_dim(nulls.iter().chain(tests))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, cal_idx) = order.split_at(k);

    let train_nulls = train_idx.iter().map(|&i| nulls[i].clone()).collect();
    let mix = cal_idx
        .iter()
        .map(|&i| (nulls[i].clone(), MixSource::Calibration(i)))
        .chain(
            tests
                .iter()
                .enumerate()
                .map(|(t, p)| (p.clone(), MixSource::Test(t))),
        )
        .collect();
    PuDataset::from_parts(train_nulls, train_idx.to_vec(), mix)
}
