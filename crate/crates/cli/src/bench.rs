use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use daeq_core::ahe::{self, log_recovery_limit, recover_bruteforce_counted, recover_bsgs, recover_log};
use daeq_core::bus::Bus;
use daeq_core::fkg::{self, make_clients, run_fkg};
use daeq_core::group::GroupParams;
use daeq_core::seeds;
use daeq_core::sharing::ClientIndex;
use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::{Failure, GroupOpts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Bruteforce,
    Bsgs,
    Log,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Encoding bit lengths, each in 2..=15.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    bits: Vec<u32>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    clients: usize,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "bruteforce,log")]
    modes: Vec<BenchMode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    group: GroupOpts,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub bits: u32,
    pub trial: usize,
    pub mode: BenchMode,
    /// The recovered exponent `T·Σm`.
    pub message: u64,
    pub steps: u64,
    pub micros: u128,
}

pub struct Bench {
    params: GroupParams,
    threshold: usize,
    x: BTreeMap<ClientIndex, daeq_core::group::Scalar>,
    h: daeq_core::group::GroupElement,
    seed: u64,
}

impl Bench {
    pub fn new(params: GroupParams, clients: usize, threshold: Option<usize>, seed: u64) -> Result<Self, Failure> {
        let threshold = threshold.unwrap_or_else(|| fkg::threshold_for(clients));
        let mut fkg_clients = make_clients(clients, seed, 0, &BTreeMap::new());
        let transcript = run_fkg(&mut fkg_clients, threshold, &params, &mut Bus::new()).map_err(|e| match e {
            fkg::FkgError::InvalidThreshold { .. } => Failure::Config(e.to_string()),
            other => Failure::Abort(other.to_string()),
        })?;
        let x = fkg_clients
            .iter()
            .map(|c| (c.index(), c.state().x_i().expect("honest run").clone()))
            .collect();
        Ok(Bench {
            params,
            threshold,
            x,
            h: transcript.h,
            seed,
        })
    }

    fn clients(&self) -> usize {
        self.x.len()
    }

    /// Encrypts one message per client, aggregates and combines `T`
    /// partials; returns the target `g0^{T·Σm}` and its exponent.
    fn target(
        &self,
        per_client_max: u64,
        rng: &mut ChaCha20Rng,
    ) -> Result<(daeq_core::group::GroupElement, u64), Failure> {
        let p = &self.params;
        let mut sum = 0u64;
        let mut cts = Vec::with_capacity(self.clients());
        for _ in 0..self.clients() {
            let m = rng.gen_range(0..=per_client_max);
            sum += m;
            let ct =
                ahe::encrypt(&BigUint::from(m), &self.h, p, &mut *rng).map_err(|e| Failure::Failed(e.to_string()))?;
            cts.push(ct);
        }
        let agg = ahe::aggregate(&cts, p).map_err(|e| Failure::Failed(e.to_string()))?;
        let mut subset: Vec<ClientIndex> = sample(rng, self.clients(), self.threshold)
            .iter()
            .map(|i| i as ClientIndex + 1)
            .collect();
        subset.sort_unstable();
        let pds = subset
            .iter()
            .map(|&i| ahe::partial_decrypt_in_subset(&agg, i, &self.x[&i], &subset, p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Failed(e.to_string()))?;
        let combined = ahe::combine(&pds, self.threshold, p).map_err(|e| Failure::Failed(e.to_string()))?;
        Ok((combined, self.threshold as u64 * sum))
    }

    /// Rows for one `(bits, trial)` pair. Log rows draw their own, smaller
    /// messages so that `2^{T·Σm} < p`.
    pub fn trial(&self, bits: u32, trial: usize, modes: &[BenchMode]) -> Result<Vec<Row>, Failure> {
        if !(2..=15).contains(&bits) {
            return Err(Failure::Config(format!("bits {bits} outside 2..=15")));
        }
        let per_client = (1u64 << bits) - 1;
        let max_m = self.threshold as u64 * self.clients() as u64 * per_client;
        if BigUint::from(max_m) >= *self.params.q() {
            return Err(Failure::Config(format!(
                "T·n·(2^{bits} - 1) = {max_m} does not fit below q"
            )));
        }
        let mut rng = seeds::stream(&[
            &self.seed.to_be_bytes(),
            b"bench",
            &bits.to_be_bytes(),
            &(trial as u64).to_be_bytes(),
        ]);
        let (target, expected) = self.target(per_client, &mut rng)?;
        let log_cap = log_recovery_limit(&self.params) / (self.threshold * self.clients()) as u64;
        let log_target = modes
            .contains(&BenchMode::Log)
            .then(|| self.target(per_client.min(log_cap), &mut rng))
            .transpose()?;

        let mut rows = Vec::new();
        for &mode in modes {
            let start = Instant::now();
            let (result, want) = match mode {
                BenchMode::Bruteforce => (recover_bruteforce_counted(&target, max_m, &self.params), expected),
                BenchMode::Bsgs => (recover_bsgs(&target, max_m, &self.params), expected),
                BenchMode::Log => {
                    let (t, want) = log_target.as_ref().expect("drawn above");
                    (recover_log(t).map(|value| ahe::Recovered { value, steps: 0 }), *want)
                }
            };
            let micros = start.elapsed().as_micros();
            let r = result.map_err(|e| Failure::Failed(format!("{mode:?} recovery failed: {e}")))?;
            if r.value != want {
                return Err(Failure::Failed(format!(
                    "{mode:?} recovered {} instead of {want}",
                    r.value
                )));
            }
            rows.push(Row {
                bits,
                trial,
                mode,
                message: r.value,
                steps: r.steps,
                micros,
            });
        }
        Ok(rows)
    }
}

pub fn run(args: BenchArgs, verbose: u8) -> Result<(), Failure> {
    for &b in &args.bits {
        if !(2..=15).contains(&b) {
            return Err(Failure::Config(format!("bits {b} outside 2..=15")));
        }
    }
    let bench = Bench::new(args.group.params()?, args.clients, args.threshold, args.seed)?;
    let sink: Box<dyn io::Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for &bits in &args.bits {
        for trial in 0..args.trials {
            for row in bench.trial(bits, trial, &args.modes)? {
                if verbose > 0 {
                    eprintln!(
                        "b={bits} trial={trial} {:?}: {} steps, {} us",
                        row.mode, row.steps, row.micros
                    );
                }
                w.serialize(row).map_err(|e| Failure::Failed(e.to_string()))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
