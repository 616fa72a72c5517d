use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{inject_adversary, ExperimentConfig, GroupPreset, Pipeline, ProtocolPhase};
use super::data::{partition_noniid, split_train_test, synthetic_blobs, ClientData, ToyDataset};
use super::model::{local_train, Mlp};
use super::report::RunReport;
use super::FlError;
use crate::ahe::{self, Ciphertext, PartialDecryption, RecoveryOptions};
use crate::bus::{Bus, MessageKind, MessageRecord, Party, Phase};
use crate::codec::EncodingConfig;
use crate::fkg::{run_fkg, FkgClient, FkgError, FkgTranscript, Misbehavior};
use crate::group::{GroupElement, GroupParams};
use crate::quant::{self, TernaryGradient};
use crate::seeds;
use crate::sharing::ClientIndex;
use crate::tensor::Tensor;

/// Sizes the global rayon pool from `DAEQ_THREADS`, if set.
pub fn init_thread_pool() {
    if let Some(n) = std::env::var("DAEQ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Per-round results. Byte and message counts are for a single client:
/// upload columns for the lowest-indexed uploader, decryption columns for
/// the lowest-indexed member of the final decrypting subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub test_accuracy: f64,
    pub test_correct: usize,
    pub test_total: usize,
    pub participants: usize,
    pub qual: usize,
    pub threshold: usize,
    pub fkg_attempts: usize,
    pub decryptor_selections: usize,
    pub bytes_tern_upload: usize,
    pub bytes_enc_upload: usize,
    pub bytes_dec_download: usize,
    pub bytes_dec_upload: usize,
    pub ct_enc: usize,
    pub ct_dec: usize,
    pub recover_steps: u64,
}

/// Wall-clock seconds spent per stage, kept apart from the deterministic metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundTimings {
    pub round: u64,
    pub fkg: f64,
    pub train: f64,
    pub encrypt: f64,
    pub decrypt: f64,
    pub recover: f64,
}

/// Key generation record for one round. Local index `k` is `members[k - 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyLog {
    pub round: u64,
    pub members: Vec<usize>,
    pub transcript: FkgTranscript,
    pub decryptors: Vec<ClientIndex>,
}

struct KeyContext {
    members: Vec<usize>,
    clients: Vec<FkgClient>,
    transcript: FkgTranscript,
    attempts: usize,
}

enum ClientOutput {
    Delta(Vec<Tensor>),
    Quantized {
        terns: Vec<TernaryGradient>,
        scaled: Vec<f64>,
        cts: Vec<Ciphertext>,
    },
}

struct Uploaded {
    local: ClientIndex,
    weight: usize,
    output: ClientOutput,
    train_s: f64,
    encrypt_s: f64,
}

pub struct Simulation {
    config: ExperimentConfig,
    group: Option<GroupParams>,
    codec: Option<EncodingConfig>,
    dataset: ToyDataset,
    clients: Vec<ClientData>,
    model: Mlp,
    theta: Vec<Tensor>,
    round: u64,
    bus: Bus,
    key_logs: Vec<KeyLog>,
    keys: Option<KeyContext>,
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self, FlError> {
        config.validate()?;
        let seed = config.seed.to_be_bytes();
        let data = synthetic_blobs(&config.data, &mut seeds::stream(&[&seed, b"data"]));
        let partition = partition_noniid(
            &data,
            config.clients,
            config.data.classes_per_client,
            &mut seeds::stream(&[&seed, b"partition"]),
        )?;
        let clients: Vec<ClientData> = partition
            .iter()
            .enumerate()
            .map(|(k, idx)| {
                let mut rng = seeds::stream(&[&seed, b"split", &(k as u64).to_be_bytes()]);
                split_train_test(idx, config.data.test_fraction, &mut rng)
            })
            .collect();
        let model = Mlp::new(config.data.features, &config.model.hidden, config.data.classes);
        let theta = model.init(&mut seeds::stream(&[&seed, b"init"]));
        let (group, codec) = if config.pipeline == Pipeline::FullEncrypted {
            let group = match config.group.preset {
                GroupPreset::Standard => GroupParams::preset_3072(),
                GroupPreset::Generated => GroupParams::generate(
                    config.group.key_bits,
                    config.group.group_bits,
                    config.group.seed.as_bytes(),
                )?,
            };
            let codec = EncodingConfig::new(config.bits, group.q())?;
            (Some(group), Some(codec))
        } else {
            (None, None)
        };
        Ok(Simulation {
            config,
            group,
            codec,
            dataset: ToyDataset { data, partition },
            clients,
            model,
            theta,
            round: 0,
            bus: Bus::new(),
            key_logs: Vec::new(),
            keys: None,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn theta(&self) -> &[Tensor] {
        &self.theta
    }

    pub fn dataset(&self) -> &ToyDataset {
        &self.dataset
    }

    pub fn client_data(&self) -> &[ClientData] {
        &self.clients
    }

    pub fn group(&self) -> Option<&GroupParams> {
        self.group.as_ref()
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn key_logs(&self) -> &[KeyLog] {
        &self.key_logs
    }

    /// Correct predictions and sample count over every client's test shard.
    pub fn evaluate(&self) -> (usize, usize) {
        self.clients
            .par_iter()
            .map(|c| {
                (
                    self.model.correct(&self.theta, &self.dataset.data, &c.test),
                    c.test.len(),
                )
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    }

    fn select_participants(&self) -> Vec<usize> {
        let (total, n) = (self.config.clients, self.config.participants());
        if n >= total {
            return (0..total).collect();
        }
        let mut rng = seeds::stream(&[&self.config.seed.to_be_bytes(), &self.round.to_be_bytes(), b"select"]);
        let mut picked = sample(&mut rng, total, n).into_vec();
        picked.sort_unstable();
        picked
    }

    fn behaviour(&self, global: usize, phase: ProtocolPhase) -> Option<Misbehavior> {
        inject_adversary(&self.config.adversaries, global, self.round, phase)
    }

    fn stream(&self, global: usize, purpose: &str) -> rand_chacha::ChaCha20Rng {
        seeds::client_stream(self.config.seed, self.round, global as u64, purpose)
    }

    /// Runs key generation, dropping disqualified clients and retrying when
    /// too few qualify.
    fn key_generation(&mut self, participants: &[usize]) -> Result<KeyContext, FlError> {
        let params = self.group.clone().expect("encrypted pipeline has a group");
        let mut members = participants.to_vec();
        let mut last = None;
        for attempt in 0..=self.config.fkg_retries {
            let n = members.len();
            if n < 2 {
                break;
            }
            let threshold = self.config.threshold_for(n);
            let mut clients: Vec<FkgClient> = members
                .iter()
                .enumerate()
                .map(|(k, &global)| {
                    let rng = seeds::stream(&[
                        &self.config.seed.to_be_bytes(),
                        &self.round.to_be_bytes(),
                        &(attempt as u64).to_be_bytes(),
                        &(global as u64).to_be_bytes(),
                        b"fkg",
                    ]);
                    let behaviour = self.behaviour(global, ProtocolPhase::KeyGeneration);
                    FkgClient::new(k as ClientIndex + 1, behaviour, rng)
                })
                .collect();
            match run_fkg(&mut clients, threshold, &params, &mut self.bus) {
                Ok(transcript) => {
                    return Ok(KeyContext {
                        members,
                        clients,
                        transcript,
                        attempts: attempt + 1,
                    });
                }
                Err(FkgError::AbortInsufficientQual {
                    qual,
                    threshold,
                    disqualified,
                }) => {
                    members = members
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| !disqualified.contains(&(*k as ClientIndex + 1)))
                        .map(|(_, &g)| g)
                        .collect();
                    last = Some(FkgError::AbortInsufficientQual {
                        qual,
                        threshold,
                        disqualified,
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        let last = last.unwrap_or(FkgError::InvalidThreshold {
            n: members.len(),
            threshold: 2,
        });
        Err(FlError::FkgRetriesExhausted {
            attempts: self.config.fkg_retries + 1,
            last,
        })
    }

    fn client_update(
        &self,
        global: usize,
        eta: f64,
        total: usize,
        h: Option<&GroupElement>,
    ) -> Result<(ClientOutput, f64, f64), FlError> {
        let cfg = &self.config;
        let shard = &self.clients[global].train;
        let start = Instant::now();
        let delta = local_train(
            &self.model,
            &self.theta,
            &self.dataset.data,
            shard,
            cfg.local_epochs,
            cfg.batch_size,
            eta,
            &mut self.stream(global, "train"),
        );
        let train_s = secs(start);
        if cfg.pipeline == Pipeline::Plain {
            return Ok((ClientOutput::Delta(delta), train_s, 0.0));
        }
        let start = Instant::now();
        let mut quant_rng = self.stream(global, "quant");
        let mut enc_rng = self.stream(global, "encrypt");
        let mut terns = Vec::with_capacity(delta.len());
        let mut scaled = Vec::with_capacity(delta.len());
        let mut cts = Vec::new();
        for d in &delta {
            // the server subtracts the aggregate, so clients quantize -Δθ
            let mut g = d.clone();
            g.scale(-1.0);
            let tern = quant::ternarize(&g, &mut quant_rng)?;
            scaled.push(tern.s * shard.len() as f64 / total as f64);
            if let (Some(h), Some(params), Some(codec)) = (h, &self.group, &self.codec) {
                let m = quant::scale_and_encode(tern.s, shard.len(), total, codec)?;
                cts.push(ahe::encrypt(m.value(), h, params, &mut enc_rng)?);
            }
            terns.push(tern);
        }
        Ok((ClientOutput::Quantized { terns, scaled, cts }, train_s, secs(start)))
    }

    /// Runs one round and returns its metrics.
    pub fn run_round(&mut self) -> Result<(RoundMetrics, RoundTimings), FlError> {
        self.bus.set_round(self.round);
        let first_record = self.bus.records().len();
        let mut timings = RoundTimings {
            round: self.round,
            ..RoundTimings::default()
        };
        let participants = self.select_participants();
        let eta = self.config.eta * self.config.lr_decay.powi(self.round as i32);
        let encrypted = self.config.pipeline == Pipeline::FullEncrypted;

        // (local index, global id) of every client that uploads
        let mut uploaders: Vec<(ClientIndex, usize)>;
        let mut fkg_attempts = 0;
        let mut threshold = self.config.threshold_for(participants.len());
        let mut qual_count = 0;
        if encrypted {
            let reuse = self.config.reuse_keys && self.keys.as_ref().is_some_and(|k| k.members == participants);
            if !reuse {
                let start = Instant::now();
                let keys = self.key_generation(&participants)?;
                timings.fkg = secs(start);
                fkg_attempts = keys.attempts;
                self.keys = Some(keys);
            }
            let keys = self.keys.as_ref().expect("keys");
            threshold = keys.transcript.threshold;
            qual_count = keys.transcript.qual.len();
            uploaders = keys
                .transcript
                .qual
                .iter()
                .map(|&l| (l, keys.members[l as usize - 1]))
                .collect();
        } else {
            uploaders = participants
                .iter()
                .enumerate()
                .map(|(k, &g)| (k as ClientIndex + 1, g))
                .collect();
        }
        uploaders.retain(|&(_, g)| self.behaviour(g, ProtocolPhase::Upload).is_none());
        if uploaders.is_empty() {
            return Err(FlError::DecryptionUnavailable {
                responsive: 0,
                threshold,
            });
        }

        let total: usize = uploaders.iter().map(|&(_, g)| self.clients[g].train.len()).sum();
        let model_bytes = 8 * self.model.param_count();
        for &(l, _) in &uploaders {
            self.bus.send(
                Phase::Broadcast,
                MessageKind::Model,
                Party::Server,
                Party::Client(l),
                model_bytes,
            );
        }
        let h = self.keys.as_ref().filter(|_| encrypted).map(|k| k.transcript.h.clone());
        let uploads: Vec<Uploaded> = uploaders
            .par_iter()
            .map(|&(local, global)| {
                let (output, train_s, encrypt_s) = self.client_update(global, eta, total, h.as_ref())?;
                Ok(Uploaded {
                    local,
                    weight: self.clients[global].train.len(),
                    output,
                    train_s,
                    encrypt_s,
                })
            })
            .collect::<Result<_, FlError>>()?;
        timings.train = uploads.iter().map(|u| u.train_s).sum();
        timings.encrypt = uploads.iter().map(|u| u.encrypt_s).sum();

        let mut recover_steps = 0;
        let mut decryptor_selections = 0;
        let mut decryptors = Vec::new();
        match self.config.pipeline {
            Pipeline::Plain => {
                for u in &uploads {
                    self.bus.send(
                        Phase::Upload,
                        MessageKind::Model,
                        Party::Client(u.local),
                        Party::Server,
                        model_bytes,
                    );
                }
                for u in &uploads {
                    let ClientOutput::Delta(delta) = &u.output else {
                        unreachable!()
                    };
                    let w = u.weight as f64 / total as f64;
                    for (t, d) in self.theta.iter_mut().zip(delta) {
                        t.axpy(w, d).expect("same shapes");
                    }
                }
            }
            pipeline => {
                let element_bytes = self.group.as_ref().map(|g| g.element_bytes());
                for u in &uploads {
                    let ClientOutput::Quantized { terns, cts, .. } = &u.output else {
                        unreachable!()
                    };
                    for (k, tern) in terns.iter().enumerate() {
                        if let (Some(_), Some(eb)) = (cts.get(k), element_bytes) {
                            for _ in 0..2 {
                                self.bus.send(
                                    Phase::Upload,
                                    MessageKind::Ciphertext,
                                    Party::Client(u.local),
                                    Party::Server,
                                    eb,
                                );
                            }
                        }
                        self.bus.send(
                            Phase::Upload,
                            MessageKind::TernaryTensor,
                            Party::Client(u.local),
                            Party::Server,
                            tern.packed_bytes(),
                        );
                    }
                }
                let tensors = self.theta.len();
                let summed: Vec<Vec<i32>> = (0..tensors)
                    .map(|k| {
                        let list: Vec<&TernaryGradient> = uploads
                            .iter()
                            .map(|u| match &u.output {
                                ClientOutput::Quantized { terns, .. } => &terns[k],
                                ClientOutput::Delta(_) => unreachable!(),
                            })
                            .collect();
                        quant::aggregate_ternary(&list)
                    })
                    .collect::<Result<_, _>>()?;
                let lr = self.config.server_lr.unwrap_or(1.0);
                match pipeline {
                    Pipeline::QuantOnly => {
                        for u in &uploads {
                            let ClientOutput::Quantized { terns, .. } = &u.output else {
                                unreachable!()
                            };
                            let w = u.weight as f64 / total as f64;
                            for (t, tern) in self.theta.iter_mut().zip(terns) {
                                t.axpy(-w, &tern.dequantize()).expect("same shapes");
                            }
                        }
                    }
                    Pipeline::QuantApprox => {
                        for (k, (t, dirs)) in self.theta.iter_mut().zip(&summed).enumerate() {
                            let s_global: f64 = uploads
                                .iter()
                                .map(|u| match &u.output {
                                    ClientOutput::Quantized { scaled, .. } => scaled[k],
                                    ClientOutput::Delta(_) => unreachable!(),
                                })
                                .sum();
                            quant::apply_tensor_update(t, dirs, lr * s_global)?;
                        }
                    }
                    Pipeline::FullEncrypted => {
                        let (recovered, steps, selections, subset, decrypt_s, recover_s) =
                            self.decrypt_phase(&uploads, tensors)?;
                        timings.decrypt = decrypt_s;
                        timings.recover = recover_s;
                        recover_steps = steps;
                        decryptor_selections = selections;
                        decryptors = subset;
                        let codec = self.codec.as_ref().expect("codec");
                        quant::apply_global_update(
                            &mut self.theta,
                            &summed,
                            &recovered,
                            threshold,
                            self.config.server_lr,
                            codec,
                        )?;
                    }
                    Pipeline::Plain => unreachable!(),
                }
            }
        }

        let (test_correct, test_total) = self.evaluate();
        let records = &self.bus.records()[first_record..];
        let probe = uploads.first().map(|u| u.local);
        let dec_probe = decryptors.first().copied();
        let from = |who: Option<ClientIndex>, kind: MessageKind| {
            move |r: &&MessageRecord| Some(r.from) == who.map(Party::Client) && r.kind == kind
        };
        let to = |who: Option<ClientIndex>, kind: MessageKind| {
            move |r: &&MessageRecord| Some(r.to) == who.map(Party::Client) && r.kind == kind
        };
        let sum = |f: &dyn Fn(&&MessageRecord) -> bool| records.iter().filter(f).map(|r| r.bytes).sum::<usize>();
        let count = |f: &dyn Fn(&&MessageRecord) -> bool| records.iter().filter(f).count();
        let metrics = RoundMetrics {
            round: self.round,
            test_accuracy: test_correct as f64 / test_total.max(1) as f64,
            test_correct,
            test_total,
            participants: participants.len(),
            qual: if encrypted { qual_count } else { uploads.len() },
            threshold,
            fkg_attempts,
            decryptor_selections,
            bytes_tern_upload: sum(&from(probe, MessageKind::TernaryTensor)),
            bytes_enc_upload: sum(&from(probe, MessageKind::Ciphertext)),
            bytes_dec_download: sum(&to(dec_probe, MessageKind::AggregateCiphertext)),
            bytes_dec_upload: sum(&from(dec_probe, MessageKind::PartialDecryption)),
            ct_enc: count(&from(probe, MessageKind::Ciphertext)),
            ct_dec: count(&to(dec_probe, MessageKind::AggregateCiphertext))
                + count(&from(dec_probe, MessageKind::PartialDecryption)),
            recover_steps,
        };
        if encrypted {
            let keys = self.keys.as_ref().expect("keys");
            self.key_logs.push(KeyLog {
                round: self.round,
                members: keys.members.clone(),
                transcript: keys.transcript.clone(),
                decryptors,
            });
        }
        self.round += 1;
        Ok((metrics, timings))
    }

    /// Aggregates ciphertexts, gathers `T` partial decryptions per tensor
    /// (re-selecting decryptors when some stay silent) and recovers `T·Σm`.
    #[allow(clippy::type_complexity)]
    fn decrypt_phase(
        &mut self,
        uploads: &[Uploaded],
        tensors: usize,
    ) -> Result<(Vec<u64>, u64, usize, Vec<ClientIndex>, f64, f64), FlError> {
        let params = self.group.clone().expect("group");
        let keys = self.keys.as_ref().expect("keys");
        let threshold = keys.transcript.threshold;
        let start = Instant::now();
        let aggregates: Vec<Ciphertext> = (0..tensors)
            .map(|k| {
                ahe::aggregate(
                    uploads.iter().map(|u| match &u.output {
                        ClientOutput::Quantized { cts, .. } => &cts[k],
                        ClientOutput::Delta(_) => unreachable!(),
                    }),
                    &params,
                )
            })
            .collect::<Result<_, _>>()?;

        let members = keys.members.clone();
        let qual: Vec<ClientIndex> = keys.transcript.qual.iter().copied().collect();
        let mut rng = seeds::stream(&[
            &self.config.seed.to_be_bytes(),
            &self.round.to_be_bytes(),
            b"decryptors",
        ]);
        let mut unresponsive = BTreeSet::new();
        let mut downloaded = BTreeSet::new();
        let mut selections = 0;
        let eb = params.element_bytes();
        let (subset, partials) = loop {
            let candidates: Vec<ClientIndex> = qual.iter().copied().filter(|c| !unresponsive.contains(c)).collect();
            if candidates.len() < threshold {
                return Err(FlError::DecryptionUnavailable {
                    responsive: candidates.len(),
                    threshold,
                });
            }
            selections += 1;
            let mut subset: Vec<ClientIndex> = sample(&mut rng, candidates.len(), threshold)
                .into_iter()
                .map(|k| candidates[k])
                .collect();
            subset.sort_unstable();
            for &j in &subset {
                if downloaded.insert(j) {
                    for _ in 0..2 * tensors {
                        self.bus.send(
                            Phase::Decrypt,
                            MessageKind::AggregateCiphertext,
                            Party::Server,
                            Party::Client(j),
                            eb,
                        );
                    }
                }
            }
            let keys = self.keys.as_ref().expect("keys");
            let replies: Vec<Option<Vec<PartialDecryption>>> = subset
                .par_iter()
                .map(|&j| {
                    let global = members[j as usize - 1];
                    if inject_adversary(&self.config.adversaries, global, self.round, ProtocolPhase::Decryption)
                        .is_some()
                    {
                        return Ok(None);
                    }
                    let x_j = keys.clients[j as usize - 1]
                        .state()
                        .x_i()
                        .expect("qualified client holds x_i");
                    aggregates
                        .iter()
                        .map(|ct| ahe::partial_decrypt_in_subset(ct, j, x_j, &subset, &params))
                        .collect::<Result<Vec<_>, _>>()
                        .map(Some)
                })
                .collect::<Result<_, ahe::AheError>>()?;
            let mut complete = true;
            for (&j, reply) in subset.iter().zip(&replies) {
                match reply {
                    Some(pds) => {
                        for _ in pds {
                            self.bus.send(
                                Phase::Decrypt,
                                MessageKind::PartialDecryption,
                                Party::Client(j),
                                Party::Server,
                                eb,
                            );
                        }
                    }
                    None => {
                        unresponsive.insert(j);
                        complete = false;
                    }
                }
            }
            if complete {
                let partials: Vec<Vec<PartialDecryption>> = replies.into_iter().map(|r| r.expect("complete")).collect();
                break (subset, partials);
            }
        };
        let decrypt_s = secs(start);

        let start = Instant::now();
        let options = RecoveryOptions {
            mode: self.config.recovery,
            max_m: self.config.recovery_limit,
            bsgs: self.config.bsgs,
        };
        let mut recovered = Vec::with_capacity(tensors);
        let mut steps = 0;
        for k in 0..tensors {
            let pds: Vec<PartialDecryption> = partials.iter().map(|p| p[k].clone()).collect();
            let r = ahe::decrypt_aggregate(&pds, threshold, &options, &params)?;
            steps += r.steps;
            recovered.push(r.value);
        }
        Ok((recovered, steps, selections, subset, decrypt_s, secs(start)))
    }

    /// Runs every configured round.
    pub fn run(self) -> Result<RunReport, FlError> {
        self.run_with(|_, _| {})
    }

    /// Like [`run`](Self::run), calling `on_round` after each round.
    pub fn run_with<F>(mut self, mut on_round: F) -> Result<RunReport, FlError>
    where
        F: FnMut(&RoundMetrics, &RoundTimings),
    {
        let mut metrics = Vec::with_capacity(self.config.rounds);
        let mut timings = Vec::with_capacity(self.config.rounds);
        for _ in 0..self.config.rounds {
            let (m, t) = self.run_round()?;
            on_round(&m, &t);
            metrics.push(m);
            timings.push(t);
        }
        Ok(RunReport {
            config: self.config,
            tensors: self.model.tensor_count(),
            parameters: self.model.param_count(),
            metrics,
            timings,
            keys: self.key_logs,
            messages: self.bus.records().to_vec(),
            final_params: self.theta,
        })
    }
}
