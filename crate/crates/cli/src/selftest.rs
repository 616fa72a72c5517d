use std::collections::BTreeMap;
use std::time::Instant;

use clap::{Args, ValueEnum};
use daeq_core::ahe::{self, RecoveryMode, RecoveryOptions};
use daeq_core::bus::Bus;
use daeq_core::fkg::{make_clients, run_fkg, FkgClient, Misbehavior};
use daeq_core::group::{GroupElement, GroupParams, Scalar};
use daeq_core::seeds;
use daeq_core::sharing::{
    feldman_commit, feldman_verify, lagrange_coefficient, pedersen_commit, pedersen_verify, reconstruct_at_zero,
    ClientIndex, SecretPolynomialPair, ShareBundle,
};
use num_bigint::BigUint;
use rand_chacha::ChaCha20Rng;

use crate::keygen::subsets;
use crate::Failure;

/// Deliberate faults for checking that the harness notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    /// Perturb one dealt share.
    Share,
    /// Use a Lagrange coefficient from the wrong subset.
    Lagrange,
    /// Combine one partial decryption too few.
    Threshold,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    #[arg(long, value_enum, hide = true)]
    mutate: Option<Mutation>,
}

type Check = Result<String, String>;

struct Property {
    name: &'static str,
    check: fn(&GroupParams, Option<Mutation>) -> Check,
}

const PROPERTIES: &[Property] = &[
    Property {
        name: "sharing.completeness",
        check: completeness,
    },
    Property {
        name: "sharing.pedersen_soundness",
        check: pedersen_soundness,
    },
    Property {
        name: "sharing.feldman_soundness",
        check: feldman_soundness,
    },
    Property {
        name: "sharing.reconstruction",
        check: reconstruction,
    },
    Property {
        name: "ahe.threshold_decryption",
        check: threshold_decryption,
    },
    Property {
        name: "ahe.recovery_modes",
        check: recovery_modes,
    },
    Property {
        name: "fkg.public_key",
        check: fkg_public_key,
    },
];

/// `(n, T)` pairs with `n/2 < T <= n`.
fn configurations() -> Vec<(usize, usize)> {
    (3..=5).flat_map(|n| (n / 2 + 1..=n).map(move |t| (n, t))).collect()
}

fn rng(label: &str) -> ChaCha20Rng {
    seeds::stream(&[b"selftest", label.as_bytes()])
}

fn shares(poly: &SecretPolynomialPair, n: usize, params: &GroupParams) -> Vec<ShareBundle> {
    (1..=n as ClientIndex)
        .map(|j| poly.evaluate(1, j, params).expect("nonzero index"))
        .collect()
}

fn completeness(params: &GroupParams, mutation: Option<Mutation>) -> Check {
    let mut rng = rng("completeness");
    let mut checked = 0;
    for (n, t) in configurations() {
        for _ in 0..20 {
            let poly = SecretPolynomialPair::sample(t, params, &mut rng).map_err(|e| e.to_string())?;
            let (ped, fel) = (pedersen_commit(&poly, params), feldman_commit(&poly, params));
            for mut share in shares(&poly, n, params) {
                if mutation == Some(Mutation::Share) && checked == 0 {
                    share.s = share.s.add(&Scalar::one(), params.q());
                }
                if !pedersen_verify(&share, &ped, params) || !feldman_verify(&share, &fel, params) {
                    return Err(format!("honest share to {} rejected (n={n}, T={t})", share.recipient));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} honest shares verified"))
}

/// Discrete log of `y` to base `g`, by search.
fn log_y(params: &GroupParams) -> BigUint {
    let q = params.q().clone();
    let mut k = BigUint::from(0u32);
    while k < q {
        if params.pow_big(&params.g(), &k) == params.y() {
            return k;
        }
        k += 1u32;
    }
    panic!("y is not in <g>");
}

fn all_scalars(params: &GroupParams) -> Vec<Scalar> {
    let q: u64 = params.q().try_into().expect("toy group");
    (0..q).map(|v| params.scalar_u64(v)).collect()
}

fn pedersen_soundness(params: &GroupParams, _: Option<Mutation>) -> Check {
    let mut rng = rng("pedersen_soundness");
    let k = params.scalar(log_y(params));
    let q = params.q();
    let field = all_scalars(params);
    let mut forged = 0;
    for (n, t) in [(3, 2), (5, 3)] {
        let poly = SecretPolynomialPair::sample(t, params, &mut rng).map_err(|e| e.to_string())?;
        let commit = pedersen_commit(&poly, params);
        for honest in shares(&poly, n, params) {
            // f(j) + k f'(j) is all the commitment pins down
            let bound = honest.s.add(&k.mul(&honest.s_prime, q), q);
            for s in &field {
                for s_prime in &field {
                    let candidate = ShareBundle {
                        s: s.clone(),
                        s_prime: s_prime.clone(),
                        ..honest.clone()
                    };
                    let accepted = pedersen_verify(&candidate, &commit, params);
                    let collision = s.add(&k.mul(s_prime, q), q) == bound;
                    if accepted != collision {
                        return Err(format!(
                            "pair ({s:?}, {s_prime:?}) accepted={accepted}, oracle={collision}"
                        ));
                    }
                    if accepted && (s, s_prime) != (&honest.s, &honest.s_prime) {
                        forged += 1;
                    }
                }
            }
        }
    }
    Ok(format!("only the {forged} oracle-predicted collisions accepted"))
}

fn feldman_soundness(params: &GroupParams, _: Option<Mutation>) -> Check {
    let mut rng = rng("feldman_soundness");
    let field = all_scalars(params);
    let mut tried = 0;
    for (n, t) in configurations() {
        let poly = SecretPolynomialPair::sample(t, params, &mut rng).map_err(|e| e.to_string())?;
        let commit = feldman_commit(&poly, params);
        for honest in shares(&poly, n, params) {
            for s in &field {
                let candidate = ShareBundle {
                    s: s.clone(),
                    ..honest.clone()
                };
                if feldman_verify(&candidate, &commit, params) != (s == &honest.s) {
                    return Err(format!("share {s:?} to {} misjudged", honest.recipient));
                }
                tried += 1;
            }
        }
    }
    Ok(format!("{tried} candidate shares judged correctly"))
}

fn reconstruction(params: &GroupParams, _: Option<Mutation>) -> Check {
    let mut rng = rng("reconstruction");
    let mut count = 0;
    for (n, t) in configurations() {
        let poly = SecretPolynomialPair::sample(t, params, &mut rng).map_err(|e| e.to_string())?;
        let all = shares(&poly, n, params);
        let indices: Vec<ClientIndex> = (1..=n as ClientIndex).collect();
        for subset in subsets(&indices, t, usize::MAX) {
            let points: Vec<_> = subset.iter().map(|&j| (j, all[j as usize - 1].s.clone())).collect();
            if reconstruct_at_zero(&points, params).map_err(|e| e.to_string())? != *poly.secret() {
                return Err(format!("subset {subset:?} missed the secret (n={n}, T={t})"));
            }
            count += 1;
        }
    }
    Ok(format!("{count} subsets reconstruct the secret"))
}

fn honest_clients(n: usize, t: usize, params: &GroupParams) -> Result<(Vec<FkgClient>, GroupElement), String> {
    let mut clients = make_clients(n, 0, t as u64, &BTreeMap::new());
    let transcript = run_fkg(&mut clients, t, params, &mut Bus::new()).map_err(|e| e.to_string())?;
    Ok((clients, transcript.h))
}

/// All vectors in `{0, .., max}^n` with `T·Σm < q`.
fn message_vectors(n: usize, max: u64, t: usize, q: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| (0..=max).map(move |m| [v.clone(), vec![m]].concat()))
            .collect();
    }
    out.retain(|v| t as u64 * v.iter().sum::<u64>() < q);
    out
}

fn threshold_decryption(params: &GroupParams, mutation: Option<Mutation>) -> Check {
    let mut rng = rng("threshold_decryption");
    let q: u64 = params.q().try_into().expect("toy group");
    let options = RecoveryOptions::new(RecoveryMode::Bruteforce, q - 1);
    let mut cases = 0;
    for (n, t) in [(3, 2), (4, 3), (5, 3)] {
        let (clients, h) = honest_clients(n, t, params)?;
        let indices: Vec<ClientIndex> = (1..=n as ClientIndex).collect();
        for messages in message_vectors(n, 2, t, q) {
            let cts = messages
                .iter()
                .map(|&m| ahe::encrypt(&BigUint::from(m), &h, params, &mut rng))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let agg = ahe::aggregate(&cts, params).map_err(|e| e.to_string())?;
            let expected = t as u64 * messages.iter().sum::<u64>();
            for subset in subsets(&indices, t, usize::MAX) {
                let mut pds = Vec::with_capacity(t);
                for &i in &subset {
                    let x = clients[i as usize - 1].state().x_i().expect("qualified");
                    let lambda_set = match mutation {
                        Some(Mutation::Lagrange) => indices[..t].to_vec(),
                        _ => subset.clone(),
                    };
                    let lambda = lagrange_coefficient(i, &lambda_set, params).unwrap_or_else(|_| Scalar::one());
                    pds.push(ahe::partial_decrypt(&agg, i, x, &lambda, t, params));
                }
                let used = if mutation == Some(Mutation::Threshold) {
                    t - 1
                } else {
                    t
                };
                let got = ahe::decrypt_aggregate(&pds[..used], used, &options, params).map(|r| r.value);
                if got != Ok(expected) {
                    return Err(format!(
                        "n={n} T={t} m={messages:?} subset {subset:?}: got {got:?}, want {expected}"
                    ));
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} (messages, subset) cases recovered T·Σm"))
}

fn recovery_modes(params: &GroupParams, _: Option<Mutation>) -> Check {
    let limit = ahe::log_recovery_limit(params);
    let g0 = params.g0();
    let mut agreed = 0;
    for m in 0..=limit {
        let target = params.pow_big(&g0, &BigUint::from(m));
        let log = ahe::recover_log(&target).map_err(|e| format!("log failed at {m}: {e}"))?;
        let brute = ahe::recover_bruteforce(&target, limit, params).map_err(|e| e.to_string())?;
        if log != m || brute != m {
            return Err(format!("m={m}: log {log}, bruteforce {brute}"));
        }
        agreed += 1;
    }
    let q: u64 = params.q().try_into().expect("toy group");
    let mut rejected = 0;
    for m in limit + 1..q {
        let target = params.pow_big(&g0, &BigUint::from(m));
        if ahe::recover_log(&target).is_ok() {
            return Err(format!("log accepted g0^{m} = {:?}", target.value()));
        }
        rejected += 1;
    }
    Ok(format!(
        "{agreed} exponents agree, {rejected} wrapped values refused by log"
    ))
}

fn fkg_public_key(params: &GroupParams, _: Option<Mutation>) -> Check {
    let q = params.q();
    let plans: [&[(ClientIndex, Misbehavior)]; 5] = [
        &[],
        &[(2, Misbehavior::BadShare)],
        &[(3, Misbehavior::FakeA0)],
        &[(1, Misbehavior::BadShare), (4, Misbehavior::FakeA0)],
        &[(5, Misbehavior::Silent)],
    ];
    let mut checked = 0;
    for plan in plans {
        let behaviours: BTreeMap<_, _> = plan.iter().copied().collect();
        let (n, t) = (5, 3);
        let mut clients = make_clients(n, 1, 0, &behaviours);
        let transcript = run_fkg(&mut clients, t, params, &mut Bus::new()).map_err(|e| format!("{plan:?}: {e}"))?;
        for (&i, &kind) in &behaviours {
            let excluded = !transcript.qual.contains(&i);
            let ok = match kind {
                Misbehavior::BadShare | Misbehavior::Silent => excluded,
                Misbehavior::FakeA0 => transcript.reconstructed.contains(&i),
                Misbehavior::Dropout => true,
            };
            if !ok {
                return Err(format!("{kind:?} by {i} went unnoticed"));
            }
        }
        let z = transcript.qual.iter().fold(Scalar::zero(), |acc, &i| {
            acc.add(clients[i as usize - 1].state().z_i().expect("dealt"), q)
        });
        if params.g_pow(&z) != transcript.h {
            return Err(format!("{plan:?}: h differs from g^(sum z_i)"));
        }
        let qual: Vec<ClientIndex> = transcript.qual.iter().copied().collect();
        for subset in subsets(&qual, t, usize::MAX) {
            let mut exp = Scalar::zero();
            for &i in &subset {
                let lambda = lagrange_coefficient(i, &subset, params).map_err(|e| e.to_string())?;
                exp = exp.add(
                    &lambda.mul(clients[i as usize - 1].state().x_i().expect("qualified"), q),
                    q,
                );
            }
            if params.g_pow(&exp) != transcript.h {
                return Err(format!("{plan:?}: subset {subset:?} misses h"));
            }
            checked += 1;
        }
    }
    Ok(format!("5 plans, {checked} subsets reproduce h"))
}

/// Runs every property, printing one line each; returns the failure count.
pub fn run_all(mutation: Option<Mutation>) -> usize {
    let params = GroupParams::toy();
    let mut failures = 0;
    for p in PROPERTIES {
        let start = Instant::now();
        match (p.check)(&params, mutation) {
            Ok(detail) => println!("PASS {:<28} {detail} ({:.2}s)", p.name, start.elapsed().as_secs_f64()),
            Err(reason) => {
                failures += 1;
                println!("FAIL {:<28} {reason}", p.name);
            }
        }
    }
    failures
}

pub fn run(args: SelftestArgs) -> Result<(), Failure> {
    match run_all(args.mutate) {
        0 => Ok(()),
        n => Err(Failure::Failed(format!(
            "{n} of {} properties failed",
            PROPERTIES.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        assert_eq!(run_all(None), 0);
    }

    #[test]
    fn mutations_are_caught() {
        assert!(completeness(&GroupParams::toy(), Some(Mutation::Share)).is_err());
        assert!(threshold_decryption(&GroupParams::toy(), Some(Mutation::Lagrange)).is_err());
        assert!(threshold_decryption(&GroupParams::toy(), Some(Mutation::Threshold)).is_err());
    }

    #[test]
    fn message_vectors_respect_bound() {
        let v = message_vectors(3, 2, 2, 11);
        assert!(v.iter().all(|m| 2 * m.iter().sum::<u64>() < 11));
        assert_eq!(v.len(), 27 - 1);
    }
}
