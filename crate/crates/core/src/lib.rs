//! Decentralized conformal novelty detection.
//!
//! Independent agents learn positive-unlabeled score functions, exchange
//! quantized surrogates of those functions instead of raw data, compute
//! composite conformal p-values and agree on a global Benjamini–Hochberg
//! threshold through the FastLSU count-exchange protocol.
//!
//! Module map:
//! - [`conformal`]: p-values, BH, FastLSU and error metrics.
//! - [`scoring`]: PU datasets, the random-forest score function, composite scores.
//! - [`quantization`]: affine parameter quantizer, wire codec, communication ledger.
//! - [`network`]: in-process K-agent episodes (ME, B2, B3, conservative ME).
//! - [`datagen`]: the Gaussian triangle benchmark.
//! - [`experiments`]: seeded sweeps and table output.

pub mod conformal;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod network;
pub mod quantization;
pub mod scoring;
pub mod seed;

pub use conformal::{
    bh_pooled, bh_procedure, empirical_pvalue, empirical_pvalues, fastlsu, fastlsu_actual_comm,
    fastlsu_comm_bound, parse_level, score_metrics, ErrorMetrics, FastLsuOutcome, IterationLog,
    Level, PValue, PValueVector, RejectionSet, TestId,
};
pub use datagen::{centroids, generate, novelty_mean, SynthConfig};
pub use error::{Error, Result};
pub use experiments::{emit_table, run_sweep, AggregateRow, SweepAxis, SweepSpec, TableFormat};
pub use network::{
    run_b2, run_b3, run_conservative, run_episode, run_model_exchange, split_blocks,
    AgentDataset, EpisodeConfig, Method, TrialOutcome,
};
pub use quantization::{
    dequantize, deserialize, payload_size, quantize_model, serialize, CommLedger, PayloadKind,
    QuantSpec, QuantizedModel,
};
pub use scoring::{
    build_pu_dataset, composite_score, train_score_model, ForestConfig, PuDataset, ScoreModel,
    ScoredBlock, Scorer,
};
