//! Federated key generation.
//!
//! Every participant deals a Pedersen-committed sharing of a random secret
//! `z_i`. The server relays all traffic, counts complaints, verifies
//! disputed shares and fixes the qualified set QUAL. QUAL dealers then
//! publish Feldman commitments; a dealer whose `A_i0` is disputed has it
//! recomputed from `T` verified shares. The global key is
//! `h = Π_{i ∈ QUAL} A_i0 = g^x` with `x = Σ z_i`, which nobody holds.
//!
//! Point-to-point shares travel as [`Sealed`] payloads that only the
//! addressed client can open.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Bus, MessageKind, Party, Phase};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::seeds;
use crate::sharing::{
    feldman_commit, feldman_verify, pedersen_commit, pedersen_verify, reconstruct_at_zero, ClientIndex,
    FeldmanCommitment, PedersenCommitment, SecretPolynomialPair, ShareBundle, SharingError,
};
use crate::wire;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FkgError {
    #[error("threshold {threshold} is invalid for {n} participants")]
    InvalidThreshold { n: usize, threshold: usize },
    #[error("only {qual} clients qualified, threshold is {threshold}")]
    AbortInsufficientQual {
        qual: usize,
        threshold: usize,
        disqualified: BTreeSet<ClientIndex>,
    },
    #[error("dispute against client {dealer} gathered {verified} of {threshold} verified shares")]
    AbortDisputeUnresolvable {
        dealer: ClientIndex,
        verified: usize,
        threshold: usize,
    },
    #[error("no verified share from qualified dealer {dealer}")]
    MissingShare { dealer: ClientIndex },
    #[error("qualified set is empty")]
    EmptyQual,
    #[error("payload sealed for client {recipient} opened by client {opener}")]
    SealViolation {
        recipient: ClientIndex,
        opener: ClientIndex,
    },
    #[error(transparent)]
    Sharing(#[from] SharingError),
}

/// Scripted deviations from the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misbehavior {
    /// Sends every recipient a share that fails the Pedersen check.
    BadShare,
    /// Publishes a Feldman commitment with a forged `A_i0`.
    #[serde(rename = "fake_A0", alias = "fake_a0")]
    FakeA0,
    /// Honest during key generation, unresponsive during decryption.
    Dropout,
    /// Sends nothing at all.
    Silent,
}

impl std::str::FromStr for Misbehavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bad_share" => Ok(Misbehavior::BadShare),
            "fake_A0" | "fake_a0" => Ok(Misbehavior::FakeA0),
            "dropout" => Ok(Misbehavior::Dropout),
            "silent" => Ok(Misbehavior::Silent),
            other => Err(format!("unknown misbehavior {other:?}")),
        }
    }
}

/// Smallest threshold strictly above `n / 2`.
pub fn threshold_for(n: usize) -> usize {
    n / 2 + 1
}

pub fn check_threshold(n: usize, threshold: usize) -> Result<(), FkgError> {
    if n < 2 || threshold > n || 2 * threshold <= n {
        return Err(FkgError::InvalidThreshold { n, threshold });
    }
    Ok(())
}

/// A point-to-point payload the relaying server cannot read.
#[derive(Debug)]
pub struct Sealed<T> {
    recipient: ClientIndex,
    bytes: usize,
    payload: T,
}

impl<T> Sealed<T> {
    fn seal(recipient: ClientIndex, bytes: usize, payload: T) -> Self {
        Sealed {
            recipient,
            bytes,
            payload,
        }
    }

    pub fn recipient(&self) -> ClientIndex {
        self.recipient
    }

    pub fn byte_len(&self) -> usize {
        self.bytes
    }

    pub fn open(self, opener: &FkgClientState) -> Result<T, FkgError> {
        if opener.index != self.recipient {
            return Err(FkgError::SealViolation {
                recipient: self.recipient,
                opener: opener.index,
            });
        }
        Ok(self.payload)
    }
}

#[derive(Clone, Debug)]
pub struct FkgClientState {
    pub index: ClientIndex,
    poly: Option<SecretPolynomialPair>,
    pub received_shares: BTreeMap<ClientIndex, ShareBundle>,
    pub received_pedersen: BTreeMap<ClientIndex, PedersenCommitment>,
    pub received_feldman: BTreeMap<ClientIndex, FeldmanCommitment>,
    x_i: Option<Scalar>,
    h: Option<GroupElement>,
    qual: BTreeSet<ClientIndex>,
}

impl FkgClientState {
    pub fn new(index: ClientIndex) -> Self {
        FkgClientState {
            index,
            poly: None,
            received_shares: BTreeMap::new(),
            received_pedersen: BTreeMap::new(),
            received_feldman: BTreeMap::new(),
            x_i: None,
            h: None,
            qual: BTreeSet::new(),
        }
    }

    pub fn poly(&self) -> Option<&SecretPolynomialPair> {
        self.poly.as_ref()
    }

    /// The contributed secret `z_i = f_i(0)`.
    pub fn z_i(&self) -> Option<&Scalar> {
        self.poly.as_ref().map(|p| p.secret())
    }

    pub fn x_i(&self) -> Option<&Scalar> {
        self.x_i.as_ref()
    }

    pub fn public_key(&self) -> Option<&GroupElement> {
        self.h.as_ref()
    }

    pub fn qual(&self) -> &BTreeSet<ClientIndex> {
        &self.qual
    }
}

/// `x_i = Σ_{j ∈ qual} s_ji mod q`.
pub fn compute_private_share(
    state: &FkgClientState,
    qual: &BTreeSet<ClientIndex>,
    params: &GroupParams,
) -> Result<Scalar, FkgError> {
    if qual.is_empty() {
        return Err(FkgError::EmptyQual);
    }
    let q = params.q();
    qual.iter().try_fold(Scalar::zero(), |acc, dealer| {
        let share = state
            .received_shares
            .get(dealer)
            .ok_or(FkgError::MissingShare { dealer: *dealer })?;
        Ok(acc.add(&share.s, q))
    })
}

pub struct Deal {
    pub pedersen: PedersenCommitment,
    pub shares: Vec<Sealed<ShareBundle>>,
}

/// One participant with its private state, behaviour and random stream.
pub struct FkgClient {
    state: FkgClientState,
    behaviour: Option<Misbehavior>,
    rng: ChaCha20Rng,
    false_accusations: BTreeSet<ClientIndex>,
}

impl FkgClient {
    pub fn new(index: ClientIndex, behaviour: Option<Misbehavior>, rng: ChaCha20Rng) -> Self {
        FkgClient {
            state: FkgClientState::new(index),
            behaviour,
            rng,
            false_accusations: BTreeSet::new(),
        }
    }

    pub fn index(&self) -> ClientIndex {
        self.state.index
    }

    pub fn state(&self) -> &FkgClientState {
        &self.state
    }

    pub fn behaviour(&self) -> Option<Misbehavior> {
        self.behaviour
    }

    /// Files Pedersen complaints against `dealers` whatever they send.
    pub fn accuse(&mut self, dealers: impl IntoIterator<Item = ClientIndex>) {
        self.false_accusations.extend(dealers);
    }

    fn silent(&self) -> bool {
        self.behaviour == Some(Misbehavior::Silent)
    }

    fn outgoing_share(&self, recipient: ClientIndex, params: &GroupParams) -> Result<ShareBundle, FkgError> {
        let poly = self.state.poly.as_ref().expect("dealt");
        let mut share = poly.evaluate(self.index(), recipient, params)?;
        if self.behaviour == Some(Misbehavior::BadShare) {
            share.s = share.s.add(&Scalar::one(), params.q());
        }
        Ok(share)
    }

    pub fn deal(&mut self, threshold: usize, n: usize, params: &GroupParams) -> Result<Option<Deal>, FkgError> {
        let poly = SecretPolynomialPair::sample(threshold, params, &mut self.rng)?;
        let pedersen = pedersen_commit(&poly, params);
        let me = self.index();
        let own = poly.evaluate(me, me, params)?;
        self.state.poly = Some(poly);
        self.state.received_shares.insert(me, own);
        self.state.received_pedersen.insert(me, pedersen.clone());
        if self.silent() {
            return Ok(None);
        }
        let mut shares = Vec::with_capacity(n.saturating_sub(1));
        for j in (1..=n as ClientIndex).filter(|&j| j != me) {
            let share = self.outgoing_share(j, params)?;
            let bytes = share_payload_bytes(&share, params);
            shares.push(Sealed::seal(j, bytes, share));
        }
        Ok(Some(Deal { pedersen, shares }))
    }

    pub fn receive_pedersen(&mut self, dealer: ClientIndex, commit: PedersenCommitment) {
        self.state.received_pedersen.insert(dealer, commit);
    }

    pub fn receive_share(&mut self, sealed: Sealed<ShareBundle>) -> Result<(), FkgError> {
        let share = sealed.open(&self.state)?;
        self.state.received_shares.insert(share.dealer, share);
        Ok(())
    }

    /// Dealers whose share is missing or fails the Pedersen check.
    pub fn pedersen_complaints(&self, n: usize, params: &GroupParams) -> Vec<ClientIndex> {
        if self.silent() {
            return Vec::new();
        }
        let me = self.index();
        (1..=n as ClientIndex)
            .filter(|&dealer| dealer != me)
            .filter(|dealer| {
                if self.false_accusations.contains(dealer) {
                    return true;
                }
                match (
                    self.state.received_shares.get(dealer),
                    self.state.received_pedersen.get(dealer),
                ) {
                    (Some(share), Some(commit)) => !pedersen_verify(share, commit, params),
                    _ => true,
                }
            })
            .collect()
    }

    /// Reveals the shares sent to each complainer.
    pub fn answer_dispute(
        &self,
        complainers: &BTreeSet<ClientIndex>,
        params: &GroupParams,
    ) -> Option<Vec<ShareBundle>> {
        if self.silent() || self.state.poly.is_none() {
            return None;
        }
        complainers
            .iter()
            .map(|&j| self.outgoing_share(j, params).ok())
            .collect()
    }

    pub fn accept_disputed_share(&mut self, share: ShareBundle) {
        if share.recipient == self.index() {
            self.state.received_shares.insert(share.dealer, share);
        }
    }

    pub fn feldman(&mut self, params: &GroupParams) -> Option<FeldmanCommitment> {
        if self.silent() {
            return None;
        }
        let poly = self.state.poly.as_ref()?;
        let honest = feldman_commit(poly, params);
        self.state.received_feldman.insert(self.index(), honest.clone());
        let mut published = honest;
        if self.behaviour == Some(Misbehavior::FakeA0) {
            published.0[0] = params.mul(&published.0[0], &params.g());
        }
        Some(published)
    }

    pub fn receive_feldman(&mut self, dealer: ClientIndex, commit: FeldmanCommitment) {
        self.state.received_feldman.insert(dealer, commit);
    }

    /// QUAL dealers whose share fails the Feldman check.
    pub fn feldman_complaints(&self, qual: &BTreeSet<ClientIndex>, params: &GroupParams) -> Vec<ClientIndex> {
        if self.silent() {
            return Vec::new();
        }
        let me = self.index();
        qual.iter()
            .copied()
            .filter(|&dealer| dealer != me)
            .filter(|dealer| {
                match (
                    self.state.received_shares.get(dealer),
                    self.state.received_feldman.get(dealer),
                ) {
                    (Some(share), Some(commit)) => !feldman_verify(share, commit, params),
                    _ => true,
                }
            })
            .collect()
    }

    /// Uploads the share received from `dealer` for reconstruction.
    pub fn disclose_share(&self, dealer: ClientIndex) -> Option<ShareBundle> {
        if self.silent() {
            return None;
        }
        self.state.received_shares.get(&dealer).cloned()
    }

    pub fn finish(
        &mut self,
        qual: &BTreeSet<ClientIndex>,
        h_parts: &BTreeMap<ClientIndex, GroupElement>,
        params: &GroupParams,
    ) -> Result<(), FkgError> {
        let x_i = compute_private_share(&self.state, qual, params)?;
        self.state.x_i = Some(x_i);
        self.state.h = Some(params.product(h_parts.values()));
        self.state.qual = qual.clone();
        Ok(())
    }
}

/// Clients `1..=n` with per-client streams for `round`.
pub fn make_clients(
    n: usize,
    seed: u64,
    round: u64,
    behaviours: &BTreeMap<ClientIndex, Misbehavior>,
) -> Vec<FkgClient> {
    (1..=n as ClientIndex)
        .map(|i| {
            let rng = seeds::client_stream(seed, round, i as u64, "fkg");
            FkgClient::new(i, behaviours.get(&i).copied(), rng)
        })
        .collect()
}

/// Clients from an explicit seed, for tests and demos.
pub fn make_clients_from_seed(n: usize, seed: [u8; 32]) -> Vec<FkgClient> {
    (1..=n as ClientIndex)
        .map(|i| {
            let child = seeds::derive_seed(&[&seed, &i.to_be_bytes()]);
            FkgClient::new(i, None, ChaCha20Rng::from_seed(child))
        })
        .collect()
}

/// Server-visible outcome of one key generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FkgTranscript {
    pub round: u64,
    pub n: usize,
    pub threshold: usize,
    pub complaints: BTreeMap<ClientIndex, BTreeSet<ClientIndex>>,
    pub feldman_complaints: BTreeMap<ClientIndex, BTreeSet<ClientIndex>>,
    pub qual: BTreeSet<ClientIndex>,
    pub disqualified: BTreeSet<ClientIndex>,
    /// Dealers whose `A_i0` was recomputed from shares.
    pub reconstructed: BTreeSet<ClientIndex>,
    pub h: GroupElement,
    pub h_parts: BTreeMap<ClientIndex, GroupElement>,
}

fn share_payload_bytes(share: &ShareBundle, params: &GroupParams) -> usize {
    share.to_bytes(params).len() - wire::framing_overhead(2)
}

fn commitment_payload_bytes(bytes: Vec<u8>, count: usize) -> usize {
    bytes.len() - wire::framing_overhead(count)
}

const INDEX_BYTES: usize = 4;

/// Runs one key generation among `clients`, which must carry indices
/// `1..=n` in order.
pub fn run_fkg(
    clients: &mut [FkgClient],
    threshold: usize,
    params: &GroupParams,
    bus: &mut Bus,
) -> Result<FkgTranscript, FkgError> {
    let n = clients.len();
    check_threshold(n, threshold)?;
    for (k, c) in clients.iter().enumerate() {
        assert_eq!(c.index() as usize, k + 1, "clients must be indexed 1..=n");
    }
    let slot = |i: ClientIndex| i as usize - 1;

    let deals = clients
        .par_iter_mut()
        .map(|c| c.deal(threshold, n, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut commitments: BTreeMap<ClientIndex, PedersenCommitment> = BTreeMap::new();
    for (k, deal) in deals.into_iter().enumerate() {
        let dealer = k as ClientIndex + 1;
        let Some(deal) = deal else { continue };
        let bytes = commitment_payload_bytes(deal.pedersen.to_bytes(params), deal.pedersen.len());
        bus.send(
            Phase::Deal,
            MessageKind::PedersenCommitment,
            Party::Client(dealer),
            Party::Server,
            bytes,
        );
        for j in (1..=n as ClientIndex).filter(|&j| j != dealer) {
            bus.send(
                Phase::Deal,
                MessageKind::PedersenCommitment,
                Party::Server,
                Party::Client(j),
                bytes,
            );
            clients[slot(j)].receive_pedersen(dealer, deal.pedersen.clone());
        }
        for sealed in deal.shares {
            let to = sealed.recipient();
            bus.send(
                Phase::Deal,
                MessageKind::Share,
                Party::Client(dealer),
                Party::Server,
                sealed.byte_len(),
            );
            bus.send(
                Phase::Deal,
                MessageKind::Share,
                Party::Server,
                Party::Client(to),
                sealed.byte_len(),
            );
            clients[slot(to)].receive_share(sealed)?;
        }
        commitments.insert(dealer, deal.pedersen);
    }

    let filed: Vec<Vec<ClientIndex>> = clients.par_iter().map(|c| c.pedersen_complaints(n, params)).collect();
    let mut complaints: BTreeMap<ClientIndex, BTreeSet<ClientIndex>> = BTreeMap::new();
    for (k, accused) in filed.into_iter().enumerate() {
        let complainer = k as ClientIndex + 1;
        for dealer in accused {
            bus.send(
                Phase::Complain,
                MessageKind::Complaint,
                Party::Client(complainer),
                Party::Server,
                INDEX_BYTES,
            );
            complaints.entry(dealer).or_default().insert(complainer);
        }
    }

    let mut qual = BTreeSet::new();
    let mut disqualified = BTreeSet::new();
    for dealer in 1..=n as ClientIndex {
        let complainers = complaints.get(&dealer).cloned().unwrap_or_default();
        if complainers.len() > threshold {
            disqualified.insert(dealer);
            continue;
        }
        if complainers.is_empty() {
            qual.insert(dealer);
            continue;
        }
        let answer = clients[slot(dealer)].answer_dispute(&complainers, params);
        let verified = match (answer, commitments.get(&dealer)) {
            (Some(shares), Some(commit)) => {
                for share in &shares {
                    bus.send(
                        Phase::Verify,
                        MessageKind::DisputedShare,
                        Party::Client(dealer),
                        Party::Server,
                        share_payload_bytes(share, params),
                    );
                }
                let consistent = shares.len() == complainers.len()
                    && shares
                        .iter()
                        .zip(&complainers)
                        .all(|(s, &j)| s.dealer == dealer && s.recipient == j && pedersen_verify(s, commit, params));
                consistent.then_some(shares)
            }
            _ => None,
        };
        match verified {
            Some(shares) => {
                qual.insert(dealer);
                for share in shares {
                    let to = share.recipient;
                    bus.send(
                        Phase::Verify,
                        MessageKind::DisputedShare,
                        Party::Server,
                        Party::Client(to),
                        share_payload_bytes(&share, params),
                    );
                    clients[slot(to)].accept_disputed_share(share);
                }
            }
            None => {
                disqualified.insert(dealer);
            }
        }
    }
    if qual.len() < threshold {
        return Err(FkgError::AbortInsufficientQual {
            qual: qual.len(),
            threshold,
            disqualified,
        });
    }

    let published: Vec<(ClientIndex, FeldmanCommitment)> = clients
        .par_iter_mut()
        .filter(|c| qual.contains(&c.index()))
        .filter_map(|c| c.feldman(params).map(|a| (c.index(), a)))
        .collect();
    let mut h_parts = BTreeMap::new();
    for (dealer, commit) in published {
        let bytes = commitment_payload_bytes(commit.to_bytes(params), commit.len());
        bus.send(
            Phase::Feldman,
            MessageKind::FeldmanCommitment,
            Party::Client(dealer),
            Party::Server,
            bytes,
        );
        for &j in qual.iter().filter(|&&j| j != dealer) {
            bus.send(
                Phase::Feldman,
                MessageKind::FeldmanCommitment,
                Party::Server,
                Party::Client(j),
                bytes,
            );
            clients[slot(j)].receive_feldman(dealer, commit.clone());
        }
        h_parts.insert(dealer, commit.0[0].clone());
    }

    let filed: Vec<(ClientIndex, Vec<ClientIndex>)> = clients
        .par_iter()
        .filter(|c| qual.contains(&c.index()))
        .map(|c| (c.index(), c.feldman_complaints(&qual, params)))
        .collect();
    let mut feldman_complaints: BTreeMap<ClientIndex, BTreeSet<ClientIndex>> = BTreeMap::new();
    for (complainer, accused) in filed {
        for dealer in accused {
            bus.send(
                Phase::Feldman,
                MessageKind::FeldmanComplaint,
                Party::Client(complainer),
                Party::Server,
                INDEX_BYTES,
            );
            feldman_complaints.entry(dealer).or_default().insert(complainer);
        }
    }
    let mut disputed: BTreeSet<ClientIndex> = feldman_complaints.keys().copied().collect();
    disputed.extend(qual.iter().filter(|i| !h_parts.contains_key(i)));

    let mut reconstructed = BTreeSet::new();
    for dealer in disputed {
        let commit = &commitments[&dealer];
        let mut points = Vec::with_capacity(threshold);
        for &j in qual.iter().filter(|&&j| j != dealer) {
            if points.len() >= threshold {
                break;
            }
            let Some(share) = clients[slot(j)].disclose_share(dealer) else {
                continue;
            };
            bus.send(
                Phase::Dispute,
                MessageKind::ReconstructionShare,
                Party::Client(j),
                Party::Server,
                share_payload_bytes(&share, params),
            );
            if share.dealer == dealer && share.recipient == j && pedersen_verify(&share, commit, params) {
                points.push((j, share.s));
            }
        }
        if points.len() < threshold {
            return Err(FkgError::AbortDisputeUnresolvable {
                dealer,
                verified: points.len(),
                threshold,
            });
        }
        let a0 = reconstruct_at_zero(&points, params)?;
        h_parts.insert(dealer, params.g_pow(&a0));
        reconstructed.insert(dealer);
    }

    let h = params.product(h_parts.values());
    let key_bytes = h_parts.len() * params.element_bytes();
    for &j in &qual {
        bus.send(
            Phase::Assemble,
            MessageKind::PublicKey,
            Party::Server,
            Party::Client(j),
            key_bytes,
        );
    }
    clients
        .par_iter_mut()
        .filter(|c| qual.contains(&c.index()))
        .try_for_each(|c| c.finish(&qual, &h_parts, params))?;

    Ok(FkgTranscript {
        round: bus.round(),
        n,
        threshold,
        complaints,
        feldman_complaints,
        qual,
        disqualified,
        reconstructed,
        h,
        h_parts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::lagrange_coefficient;

    fn plan(entries: &[(ClientIndex, Misbehavior)]) -> BTreeMap<ClientIndex, Misbehavior> {
        entries.iter().copied().collect()
    }

    fn run(
        n: usize,
        t: usize,
        entries: &[(ClientIndex, Misbehavior)],
        seed: u64,
        params: &GroupParams,
    ) -> (Vec<FkgClient>, Result<FkgTranscript, FkgError>, Bus) {
        let mut clients = make_clients(n, seed, 0, &plan(entries));
        let mut bus = Bus::new();
        let result = run_fkg(&mut clients, t, params, &mut bus);
        (clients, result, bus)
    }

    /// Oracle: `g^{Σ z_i}` over QUAL, read directly from client secrets.
    fn oracle_h(clients: &[FkgClient], qual: &BTreeSet<ClientIndex>, params: &GroupParams) -> GroupElement {
        let q = params.q();
        let x = qual.iter().fold(Scalar::zero(), |acc, &i| {
            acc.add(clients[i as usize - 1].state().z_i().unwrap(), q)
        });
        params.g_pow(&x)
    }

    fn subsets(items: &[ClientIndex], k: usize) -> Vec<Vec<ClientIndex>> {
        if k == 0 {
            return vec![vec![]];
        }
        if items.len() < k {
            return vec![];
        }
        let mut out = subsets(&items[1..], k - 1);
        for s in &mut out {
            s.insert(0, items[0]);
        }
        out.extend(subsets(&items[1..], k));
        out
    }

    fn assert_key_correct(clients: &[FkgClient], tr: &FkgTranscript, params: &GroupParams) {
        assert_eq!(tr.h, oracle_h(clients, &tr.qual, params));
        let qual: Vec<ClientIndex> = tr.qual.iter().copied().collect();
        let q = params.q();
        for s in subsets(&qual, tr.threshold) {
            let x = s.iter().fold(Scalar::zero(), |acc, &i| {
                let lambda = lagrange_coefficient(i, &s, params).unwrap();
                let x_i = clients[i as usize - 1].state().x_i().unwrap();
                acc.add(&lambda.mul(x_i, q), q)
            });
            assert_eq!(params.g_pow(&x), tr.h, "subset {s:?}");
        }
        for &i in &tr.qual {
            let c = &clients[i as usize - 1];
            if c.behaviour().is_none() {
                assert_eq!(c.state().public_key(), Some(&tr.h));
                assert_eq!(c.state().qual(), &tr.qual);
            }
        }
        assert!(tr.qual.is_disjoint(&tr.disqualified));
    }

    #[test]
    fn honest_run() {
        let params = GroupParams::toy();
        for seed in 0..20 {
            let (clients, tr, _) = run(4, 3, &[], seed, &params);
            let tr = tr.unwrap();
            assert_eq!(tr.qual, (1..=4).collect());
            assert!(tr.complaints.is_empty());
            assert_key_correct(&clients, &tr, &params);
        }
    }

    #[test]
    fn bad_share_is_disqualified() {
        let params = GroupParams::toy();
        let (clients, tr, bus) = run(4, 3, &[(2, Misbehavior::BadShare)], 7, &params);
        let tr = tr.unwrap();
        assert_eq!(tr.disqualified, BTreeSet::from([2]));
        assert_eq!(tr.complaints[&2], BTreeSet::from([1, 3, 4]));
        // exactly T complaints: verified rather than disqualified outright
        assert_eq!(bus.count(|r| r.kind == MessageKind::DisputedShare), 3);
        assert_key_correct(&clients, &tr, &params);
    }

    #[test]
    fn more_than_t_complaints_disqualifies_unconditionally() {
        let params = GroupParams::toy();
        let (clients, tr, bus) = run(5, 3, &[(5, Misbehavior::BadShare)], 3, &params);
        let tr = tr.unwrap();
        assert_eq!(tr.complaints[&5].len(), 4);
        assert_eq!(tr.disqualified, BTreeSet::from([5]));
        assert_eq!(bus.count(|r| r.kind == MessageKind::DisputedShare), 0);
        assert_key_correct(&clients, &tr, &params);
    }

    #[test]
    fn false_complaints_against_honest_dealer() {
        let params = GroupParams::toy();
        let mut clients = make_clients(4, 11, 0, &BTreeMap::new());
        for j in [1, 3, 4] {
            clients[j - 1].accuse([2]);
        }
        let mut bus = Bus::new();
        let tr = run_fkg(&mut clients, 3, &params, &mut bus).unwrap();
        assert_eq!(tr.complaints[&2].len(), 3);
        assert!(tr.qual.contains(&2));
        assert_key_correct(&clients, &tr, &params);
    }

    #[test]
    fn fake_a0_is_reconstructed() {
        let params = GroupParams::toy();
        for seed in 0..10 {
            let (clients, tr, _) = run(4, 3, &[(2, Misbehavior::FakeA0)], seed, &params);
            let tr = tr.unwrap();
            assert!(tr.qual.contains(&2));
            assert_eq!(tr.reconstructed, BTreeSet::from([2]));
            assert_eq!(tr.feldman_complaints[&2], BTreeSet::from([1, 3, 4]));
            assert_key_correct(&clients, &tr, &params);
        }
    }

    #[test]
    fn silent_client_is_disqualified() {
        let params = GroupParams::toy();
        let (clients, tr, _) = run(5, 3, &[(4, Misbehavior::Silent)], 1, &params);
        let tr = tr.unwrap();
        assert_eq!(tr.disqualified, BTreeSet::from([4]));
        assert_key_correct(&clients, &tr, &params);
    }

    #[test]
    fn mixed_adversaries_on_larger_group() {
        let params = GroupParams::generate(32, 128, b"fkg-mixed").unwrap();
        let entries = [(2, Misbehavior::BadShare), (5, Misbehavior::FakeA0)];
        let (clients, tr, _) = run(7, 4, &entries, 5, &params);
        let tr = tr.unwrap();
        assert_eq!(tr.disqualified, BTreeSet::from([2]));
        assert_eq!(tr.reconstructed, BTreeSet::from([5]));
        assert_key_correct(&clients, &tr, &params);
    }

    #[test]
    fn aborts() {
        let params = GroupParams::toy();
        let silent = [(2, Misbehavior::Silent), (3, Misbehavior::Silent)];
        let (_, result, _) = run(3, 2, &silent, 0, &params);
        assert_eq!(
            result.unwrap_err(),
            FkgError::AbortInsufficientQual {
                qual: 1,
                threshold: 2,
                disqualified: BTreeSet::from([2, 3]),
            }
        );

        let params = GroupParams::generate(32, 128, b"fkg-abort").unwrap();
        let (_, result, _) = run(2, 2, &[(2, Misbehavior::FakeA0)], 0, &params);
        assert_eq!(
            result.unwrap_err(),
            FkgError::AbortDisputeUnresolvable {
                dealer: 2,
                verified: 1,
                threshold: 2
            }
        );
    }

    #[test]
    fn threshold_bounds() {
        let params = GroupParams::toy();
        for (n, t) in [(1, 1), (4, 2), (4, 5), (3, 1)] {
            let (_, result, _) = run(n, t, &[], 0, &params);
            assert_eq!(result.unwrap_err(), FkgError::InvalidThreshold { n, threshold: t });
        }
        assert_eq!(threshold_for(4), 3);
        assert_eq!(threshold_for(5), 3);
        assert_eq!(threshold_for(2), 2);
    }

    #[test]
    fn private_share_edges() {
        let params = GroupParams::toy();
        let (clients, tr, _) = run(3, 2, &[], 4, &params);
        tr.unwrap();
        let state = clients[0].state();
        let own = state.poly().unwrap().evaluate(1, 1, &params).unwrap().s;
        assert_eq!(
            compute_private_share(state, &BTreeSet::from([1]), &params).unwrap(),
            own
        );
        assert_eq!(
            compute_private_share(state, &BTreeSet::new(), &params),
            Err(FkgError::EmptyQual)
        );
        assert_eq!(
            compute_private_share(state, &BTreeSet::from([1, 9]), &params),
            Err(FkgError::MissingShare { dealer: 9 })
        );
    }

    #[test]
    fn seal_rejects_other_clients() {
        let sealed = Sealed::seal(2, 0, 42u8);
        let err = sealed.open(&FkgClientState::new(3)).unwrap_err();
        assert_eq!(
            err,
            FkgError::SealViolation {
                recipient: 2,
                opener: 3
            }
        );
    }

    #[test]
    fn server_view_holds_no_secrets() {
        let params = GroupParams::generate(32, 128, b"fkg-blind").unwrap();
        let (clients, tr, bus) = run(5, 3, &[], 9, &params);
        let tr = tr.unwrap();
        let view = serde_json::to_string(&(&tr, bus.records())).unwrap();
        for c in &clients {
            let st = c.state();
            let mut secrets = vec![st.z_i().unwrap().clone(), st.x_i().unwrap().clone()];
            secrets.extend(st.received_shares.values().map(|s| s.s.clone()));
            for s in secrets {
                let needle = format!("0x{:x}", s.value());
                assert!(!view.contains(&format!("\"{needle}\"")), "leaked {needle}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let params = GroupParams::toy();
        let (_, a, bus_a) = run(5, 3, &[(1, Misbehavior::FakeA0)], 21, &params);
        let (_, b, bus_b) = run(5, 3, &[(1, Misbehavior::FakeA0)], 21, &params);
        assert_eq!(a.unwrap(), b.unwrap());
        assert_eq!(bus_a.records(), bus_b.records());
    }

    #[test]
    fn randomized_plans_with_honest_majority() {
        use rand::Rng;
        let params = GroupParams::toy();
        let kinds = [
            Misbehavior::BadShare,
            Misbehavior::FakeA0,
            Misbehavior::Silent,
            Misbehavior::Dropout,
        ];
        let mut rng = seeds::stream(&[b"fkg-plans"]);
        for trial in 0..60 {
            let n = rng.gen_range(2..=7usize);
            let t = threshold_for(n) + rng.gen_range(0..=(n - threshold_for(n)));
            let bad = rng.gen_range(0..=(n - t));
            let mut entries = Vec::new();
            while entries.len() < bad {
                let i = rng.gen_range(1..=n as ClientIndex);
                if entries.iter().all(|(j, _)| *j != i) {
                    entries.push((i, kinds[rng.gen_range(0..kinds.len())]));
                }
            }
            let (clients, tr, _) = run(n, t, &entries, trial, &params);
            let tr = tr.unwrap_or_else(|e| panic!("n={n} t={t} plan={entries:?}: {e}"));
            for (i, kind) in &entries {
                match kind {
                    Misbehavior::BadShare | Misbehavior::Silent => assert!(tr.disqualified.contains(i)),
                    _ => assert!(tr.qual.contains(i)),
                }
            }
            assert_key_correct(&clients, &tr, &params);
        }
    }
}
