use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use daeq_core::bus::Bus;
use daeq_core::fkg::{self, make_clients, run_fkg, Misbehavior};
use daeq_core::group::Scalar;
use daeq_core::sharing::{lagrange_coefficient, ClientIndex};

use crate::{Failure, GroupOpts};

#[derive(Args, Debug)]
pub struct KeygenArgs {
    #[arg(long, default_value_t = 5)]
    clients: usize,
    /// Defaults to the smallest value above half the clients.
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `INDEX:KIND` with a 1-based index and kind one of bad_share, fake_A0,
    /// dropout, silent. Repeatable.
    #[arg(long = "adversary", value_name = "INDEX:KIND", value_parser = parse_adversary)]
    adversaries: Vec<(ClientIndex, Misbehavior)>,
    /// Write the full transcript as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    group: GroupOpts,
}

fn parse_adversary(s: &str) -> Result<(ClientIndex, Misbehavior), String> {
    let (idx, kind) = s.split_once(':').ok_or("expected INDEX:KIND")?;
    let idx: ClientIndex = idx.parse().map_err(|e| format!("bad index: {e}"))?;
    if idx == 0 {
        return Err("indices start at 1".into());
    }
    Ok((idx, kind.parse()?))
}

/// Every `k`-subset of `items`, in lexicographic order, capped at `limit`.
pub fn subsets(items: &[ClientIndex], k: usize, limit: usize) -> Vec<Vec<ClientIndex>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        if out.len() >= limit {
            return out;
        }
        let mut i = k;
        while i > 0 && idx[i - 1] == items.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn run(args: KeygenArgs) -> Result<(), Failure> {
    let params = args.group.params()?;
    let n = args.clients;
    let threshold = args.threshold.unwrap_or_else(|| fkg::threshold_for(n));
    if let Some(&(idx, _)) = args.adversaries.iter().find(|(i, _)| *i as usize > n) {
        return Err(Failure::Config(format!("adversary index {idx} exceeds {n} clients")));
    }
    let behaviours: BTreeMap<_, _> = args.adversaries.iter().copied().collect();
    let mut clients = make_clients(n, args.seed, 0, &behaviours);
    let mut bus = Bus::new();
    let transcript = run_fkg(&mut clients, threshold, &params, &mut bus).map_err(|e| match e {
        fkg::FkgError::InvalidThreshold { .. } => Failure::Config(e.to_string()),
        other => Failure::Abort(other.to_string()),
    })?;

    println!(
        "clients {n}, threshold {threshold}, group {}/{} bits",
        params.key_bits(),
        params.group_bits()
    );
    for (accused, by) in &transcript.complaints {
        println!("complaints against {accused}: {by:?}");
    }
    for (accused, by) in &transcript.feldman_complaints {
        println!("feldman complaints against {accused}: {by:?}");
    }
    println!("disqualified {:?}", transcript.disqualified);
    println!("reconstructed A0 for {:?}", transcript.reconstructed);
    println!("QUAL {:?}", transcript.qual);
    let hex = format!("{:x}", transcript.h.value());
    println!(
        "h = 0x{}{}",
        &hex[..hex.len().min(32)],
        if hex.len() > 32 { "..." } else { "" }
    );

    let mut per_phase: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in bus.records() {
        let e = per_phase.entry(format!("{:?}", r.phase)).or_default();
        e.0 += 1;
        e.1 += r.bytes;
    }
    for (phase, (count, bytes)) in &per_phase {
        println!("{phase:<9} {count:>5} messages {bytes:>9} bytes");
    }

    let qual: Vec<ClientIndex> = transcript.qual.iter().copied().collect();
    let q = params.q();
    let mut checked = 0;
    for subset in subsets(&qual, threshold, 64) {
        let mut exp = Scalar::zero();
        for &i in &subset {
            let lambda = lagrange_coefficient(i, &subset, &params).map_err(|e| Failure::Failed(e.to_string()))?;
            let x = clients[i as usize - 1]
                .state()
                .x_i()
                .expect("qualified client holds x_i");
            exp = exp.add(&lambda.mul(x, q), q);
        }
        if params.g_pow(&exp) != transcript.h {
            return Err(Failure::Failed(format!("subset {subset:?} does not reproduce h")));
        }
        checked += 1;
    }
    println!("g^(sum lambda_i x_i) = h for {checked} subsets of size {threshold}");

    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&transcript).map_err(|e| Failure::Failed(e.to_string()))?;
        fs::write(path, text + "\n")?;
    }
    Ok(())
}
