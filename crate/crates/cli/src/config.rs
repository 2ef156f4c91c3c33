//! Run settings: TOML file values, overridden by command-line flags.
//!
//! Every key is optional; a missing key falls back to the built-in default.
//!
//! ```toml
//! sweep = "delta"            # or "bits"
//! values = ["0", "2.0"]      # shifts, or bit widths ("none", "6", ...)
//! methods = ["B2", "B3", "ME"]
//! agents = 3
//! alpha = "0.1"              # decimal or "n/d"
//! trials = 100
//! seed = 0
//! d = 20
//! pi0 = 0.6                  # null fraction of each agent's test sample
//! train_frac = 0.5
//! trees = 100
//! max_depth = 8
//! min_leaf = 5
//! n_train = 3000
//! n_test = 1000
//! delta = 2.0                # shift used by a bits sweep
//! bits = "none"              # quantization used by a delta sweep
//! format = "csv"             # or "markdown"
//! out = "results.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sweep: Option<String>,
    pub values: Option<Vec<String>>,
    pub methods: Option<Vec<String>>,
    pub agents: Option<usize>,
    pub alpha: Option<String>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub d: Option<usize>,
    pub pi0: Option<f64>,
    pub train_frac: Option<f64>,
    pub trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub delta: Option<f64>,
    pub bits: Option<String>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}
