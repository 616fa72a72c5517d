use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Pipeline};
use super::sim::{KeyLog, RoundMetrics, RoundTimings};
use crate::bus::MessageRecord;
use crate::tensor::Tensor;

/// Column order of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 16] = [
    "round",
    "test_accuracy",
    "test_correct",
    "test_total",
    "participants",
    "qual",
    "threshold",
    "fkg_attempts",
    "decryptor_selections",
    "bytes_tern_upload",
    "bytes_enc_upload",
    "bytes_dec_download",
    "bytes_dec_upload",
    "ct_enc",
    "ct_dec",
    "recover_steps",
];

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub tensors: usize,
    pub parameters: usize,
    pub metrics: Vec<RoundMetrics>,
    pub timings: Vec<RoundTimings>,
    pub keys: Vec<KeyLog>,
    pub messages: Vec<MessageRecord>,
    pub final_params: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub rounds: usize,
    pub tensors: usize,
    pub parameters: usize,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub fkg_attempts: usize,
    pub disqualified: Vec<usize>,
    pub recover_steps: u64,
    /// SHA-256 over the little-endian bytes of the final parameters.
    pub params_sha256: String,
    pub config: ExperimentConfig,
}

#[derive(Serialize)]
struct Transcript<'a> {
    keys: &'a [KeyLog],
    messages: &'a [MessageRecord],
}

impl RunReport {
    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.test_accuracy)
    }

    pub fn params_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.final_params {
            for v in t.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn summary(&self) -> RunSummary {
        let mut disqualified: Vec<usize> = self
            .keys
            .iter()
            .flat_map(|k| k.transcript.disqualified.iter().map(|&l| k.members[l as usize - 1]))
            .collect();
        disqualified.sort_unstable();
        disqualified.dedup();
        RunSummary {
            pipeline: self.config.pipeline,
            seed: self.config.seed,
            rounds: self.metrics.len(),
            tensors: self.tensors,
            parameters: self.parameters,
            final_test_accuracy: self.final_accuracy(),
            best_test_accuracy: self.metrics.iter().map(|m| m.test_accuracy).fold(0.0, f64::max),
            fkg_attempts: self.metrics.iter().map(|m| m.fkg_attempts).sum(),
            disqualified,
            recover_steps: self.metrics.iter().map(|m| m.recover_steps).sum(),
            params_sha256: self.params_digest(),
            config: self.config.clone(),
        }
    }

    pub fn metrics_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.metrics {
            w.serialize(m)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }

    /// Writes `metrics.csv`, `timings.csv`, `summary.json` and, when asked,
    /// `transcript.json` into `dir`.
    pub fn write(&self, dir: &Path, transcript: bool) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv()?)?;
        let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
        for t in &self.timings {
            w.serialize(t)?;
        }
        w.flush()?;
        let summary = serde_json::to_string_pretty(&self.summary()).map_err(io::Error::other)?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        if transcript {
            let body = Transcript {
                keys: &self.keys,
                messages: &self.messages,
            };
            let text = serde_json::to_string_pretty(&body).map_err(io::Error::other)?;
            fs::write(dir.join("transcript.json"), text + "\n")?;
        }
        Ok(())
    }
}
