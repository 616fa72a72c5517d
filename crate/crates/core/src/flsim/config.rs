use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FlError;
use crate::ahe::RecoveryMode;
use crate::codec::{MAX_BITS, MIN_BITS};
use crate::fkg::{threshold_for, Misbehavior};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Federated averaging on raw deltas.
    Plain,
    /// Ternary updates averaged exactly, `Σ (n_i/n) s_i dirs_i`.
    QuantOnly,
    /// Separate-scalar aggregation in floating point, no encryption.
    QuantApprox,
    /// Separate-scalar aggregation with encrypted, encoded scalars.
    #[default]
    FullEncrypted,
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pipeline::Plain => "plain",
            Pipeline::QuantOnly => "quant_only",
            Pipeline::QuantApprox => "quant_approx",
            Pipeline::FullEncrypted => "full_encrypted",
        })
    }
}

impl std::str::FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Pipeline::Plain),
            "quant_only" => Ok(Pipeline::QuantOnly),
            "quant_approx" => Ok(Pipeline::QuantApprox),
            "full_encrypted" => Ok(Pipeline::FullEncrypted),
            other => Err(format!("unknown pipeline {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub classes: usize,
    pub features: usize,
    pub samples_per_class: usize,
    pub classes_per_client: usize,
    /// Standard deviation of the class centres.
    pub separation: f64,
    /// Standard deviation of samples around their centre.
    pub noise: f64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            classes: 4,
            features: 32,
            samples_per_class: 1000,
            classes_per_client: 2,
            separation: 0.5,
            noise: 1.0,
            test_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: vec![32] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPreset {
    /// The frozen 256/3072-bit parameters.
    #[default]
    Standard,
    /// Parameters generated from `key_bits`, `group_bits` and `seed`.
    Generated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupConfig {
    pub preset: GroupPreset,
    pub key_bits: u64,
    pub group_bits: u64,
    pub seed: String,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            preset: GroupPreset::Standard,
            key_bits: 256,
            group_bits: 3072,
            seed: "daeq-fl".into(),
        }
    }
}

/// One scripted adversary. `client` is a global id in `0..clients`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryEntry {
    pub client: usize,
    pub kind: Misbehavior,
    /// Rounds in which the behaviour applies; every round when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "N")]
    pub clients: usize,
    #[serde(alias = "C")]
    pub participation: f64,
    /// Fixed threshold; the smallest integer above `n/2` when absent.
    #[serde(alias = "T", skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    pub rounds: usize,
    #[serde(alias = "E")]
    pub local_epochs: usize,
    #[serde(alias = "B")]
    pub batch_size: usize,
    pub eta: f64,
    pub lr_decay: f64,
    #[serde(alias = "b")]
    pub bits: u32,
    #[serde(alias = "recovery_mode")]
    pub recovery: RecoveryMode,
    pub bsgs: bool,
    /// Upper bound on recovered exponents for linear search.
    pub recovery_limit: u64,
    pub pipeline: Pipeline,
    pub seed: u64,
    /// Extra factor on the decoded global step (the η of the conceptual SGD view).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server_lr: Option<f64>,
    /// Keep one key for every round while the participant set is unchanged.
    pub reuse_keys: bool,
    pub fkg_retries: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub group: GroupConfig,
    #[serde(alias = "adversary_plan")]
    pub adversaries: Vec<AdversaryEntry>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            clients: 8,
            participation: 1.0,
            threshold: None,
            rounds: 30,
            local_epochs: 1,
            batch_size: 16,
            eta: 0.1,
            lr_decay: 0.995,
            bits: crate::codec::DEFAULT_BITS,
            recovery: RecoveryMode::Auto,
            bsgs: false,
            recovery_limit: 1 << 24,
            pipeline: Pipeline::FullEncrypted,
            seed: 0,
            server_lr: None,
            reuse_keys: false,
            fkg_retries: 3,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            group: GroupConfig::default(),
            adversaries: Vec::new(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> FlError {
    FlError::Config(msg.into())
}

/// Parses a `key.path=value` override; the value is read as a TOML literal
/// and falls back to a bare string.
fn apply_override(table: &mut toml::Table, raw: &str) -> Result<(), FlError> {
    let (path, value) = raw
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {raw:?} is not key=value")))?;
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(format!("bad override path {path:?}")));
    }
    let (last, parents) = keys.split_last().expect("nonempty");
    let mut node = table;
    for key in parents {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("{key} is not a table")))?;
    }
    node.insert(last.to_string(), parsed);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, FlError> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self, FlError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        for raw in overrides {
            apply_override(&mut table, raw.as_ref())?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Participants per round, `C·N` rounded to the nearest integer.
    pub fn participants(&self) -> usize {
        (self.participation * self.clients as f64).round() as usize
    }

    pub fn threshold_for(&self, n: usize) -> usize {
        match self.threshold {
            Some(t) if 2 * t > n && t <= n => t,
            _ => threshold_for(n),
        }
    }

    /// Distinct clients named by the adversary plan.
    pub fn adversary_count(&self) -> usize {
        self.adversaries.iter().map(|a| a.client).collect::<BTreeSet<_>>().len()
    }

    pub fn tensor_count(&self) -> usize {
        2 * (self.model.hidden.len() + 1)
    }

    pub fn validate(&self) -> Result<(), FlError> {
        if self.clients == 0 {
            return Err(config_error("clients must be positive"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(config_error("participation must lie in (0, 1]"));
        }
        let n = self.participants();
        if n < 2 {
            return Err(config_error(format!("C·N = {n} participants, need at least 2")));
        }
        if let Some(t) = self.threshold {
            if 2 * t <= n || t > n {
                return Err(config_error(format!(
                    "threshold {t} must satisfy n/2 < T <= n for n = {n}"
                )));
            }
        }
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(config_error("rounds, local_epochs and batch_size must be positive"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(config_error("eta must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(config_error("lr_decay must lie in (0, 1]"));
        }
        if !(MIN_BITS..=MAX_BITS).contains(&self.bits) {
            return Err(config_error(format!(
                "bits = {} outside {MIN_BITS}..={MAX_BITS}",
                self.bits
            )));
        }
        if let Some(lr) = self.server_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(config_error("server_lr must be positive"));
            }
        }
        if self.recovery_limit == 0 {
            return Err(config_error("recovery_limit must be positive"));
        }
        let d = &self.data;
        if d.classes < 2 || d.features == 0 || d.samples_per_class == 0 || d.classes_per_client == 0 {
            return Err(config_error("data needs >= 2 classes and positive sizes"));
        }
        if !(0.0..1.0).contains(&d.test_fraction)
            || d.noise.is_nan()
            || d.noise < 0.0
            || d.separation.is_nan()
            || d.separation < 0.0
        {
            return Err(config_error(
                "test_fraction must lie in [0, 1), noise and separation >= 0",
            ));
        }
        if self.model.hidden.contains(&0) {
            return Err(config_error("hidden layer widths must be positive"));
        }
        if self.group.preset == GroupPreset::Generated
            && (self.group.key_bits < crate::group::MIN_KEY_BITS || self.group.group_bits <= self.group.key_bits)
        {
            return Err(config_error(
                "generated group needs key_bits >= 16 and group_bits > key_bits",
            ));
        }
        for a in &self.adversaries {
            if a.client >= self.clients {
                return Err(config_error(format!("adversary client {} out of range", a.client)));
            }
        }
        let allowed = n - self.threshold_for(n);
        let adversaries = self.adversary_count();
        if adversaries > allowed {
            return Err(FlError::PlanViolatesHonestMajority { adversaries, allowed });
        }
        Ok(())
    }
}

/// Protocol stages at which a scripted behaviour can take effect.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolPhase {
    KeyGeneration,
    Upload,
    Decryption,
}

/// The behaviour override for `client` at `phase` of `round`, if any.
pub fn inject_adversary(
    plan: &[AdversaryEntry],
    client: usize,
    round: u64,
    phase: ProtocolPhase,
) -> Option<Misbehavior> {
    let kind = plan
        .iter()
        .find(|a| a.client == client && a.rounds.as_ref().is_none_or(|r| r.contains(&round)))?
        .kind;
    let applies = match phase {
        ProtocolPhase::KeyGeneration => kind != Misbehavior::Dropout,
        ProtocolPhase::Upload => kind == Misbehavior::Silent,
        ProtocolPhase::Decryption => matches!(kind, Misbehavior::Dropout | Misbehavior::Silent),
    };
    applies.then_some(kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_names_round_trip() {
        for p in [
            Pipeline::Plain,
            Pipeline::QuantOnly,
            Pipeline::QuantApprox,
            Pipeline::FullEncrypted,
        ] {
            assert_eq!(p.to_string().parse::<Pipeline>(), Ok(p));
        }
    }

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.participants(), 8);
        assert_eq!(c.threshold_for(8), 5);
        assert_eq!(c.tensor_count(), 4);
    }

    #[test]
    fn aliases_and_overrides() {
        let text = "N = 6\nC = 0.5\nb = 4\npipeline = \"plain\"\n[model]\nhidden = []\n";
        let c = ExperimentConfig::from_toml_with_overrides(
            text,
            &[
                "data.classes=3",
                "recovery=log",
                "group.seed=abc",
                "model.hidden=[4, 4, 4]",
            ],
        )
        .unwrap();
        assert_eq!(c.clients, 6);
        assert_eq!(c.participants(), 3);
        assert_eq!(c.bits, 4);
        assert_eq!(c.pipeline, Pipeline::Plain);
        assert_eq!(c.data.classes, 3);
        assert_eq!(c.recovery, RecoveryMode::Log);
        assert_eq!(c.group.seed, "abc");
        assert_eq!(c.tensor_count(), 8);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "bits=16",
            "bits=1",
            "participation=0",
            "N=1",
            "T=4",
            "unknown=1",
            "eta=-1",
        ] {
            let err = ExperimentConfig::from_toml_with_overrides("", &[bad]).unwrap_err();
            assert!(matches!(err, FlError::Config(_)), "{bad}: {err}");
        }
        assert!(ExperimentConfig::from_toml("rounds = \"x\"").is_err());
        assert!(ExperimentConfig::from_toml_with_overrides("", &["noequals"]).is_err());
    }

    #[test]
    fn honest_majority() {
        let text = r#"
            N = 4
            [[adversaries]]
            client = 1
            kind = "bad_share"
            [[adversaries]]
            client = 2
            kind = "fake_A0"
        "#;
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert_eq!(
            err,
            FlError::PlanViolatesHonestMajority {
                adversaries: 2,
                allowed: 1
            }
        );
        let ok = ExperimentConfig::from_toml_with_overrides(text, &["N=5"]).unwrap();
        assert_eq!(ok.adversary_count(), 2);
    }

    #[test]
    fn phases() {
        let plan = vec![
            AdversaryEntry {
                client: 1,
                kind: Misbehavior::Dropout,
                rounds: Some(vec![2]),
            },
            AdversaryEntry {
                client: 3,
                kind: Misbehavior::BadShare,
                rounds: None,
            },
        ];
        assert_eq!(
            inject_adversary(&plan, 1, 2, ProtocolPhase::Decryption),
            Some(Misbehavior::Dropout)
        );
        assert_eq!(inject_adversary(&plan, 1, 2, ProtocolPhase::KeyGeneration), None);
        assert_eq!(inject_adversary(&plan, 1, 3, ProtocolPhase::Decryption), None);
        assert_eq!(
            inject_adversary(&plan, 3, 9, ProtocolPhase::KeyGeneration),
            Some(Misbehavior::BadShare)
        );
        assert_eq!(inject_adversary(&plan, 3, 9, ProtocolPhase::Decryption), None);
        assert_eq!(inject_adversary(&plan, 0, 0, ProtocolPhase::Upload), None);
    }
}
