//! In-process message bus. Every message is relayed by the server and
//! logged with its sender, receiver, phase and payload size.

use serde::{Deserialize, Serialize};

use crate::sharing::ClientIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Server,
    Client(ClientIndex),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Deal,
    Complain,
    Verify,
    Feldman,
    Dispute,
    Assemble,
    Broadcast,
    Upload,
    Decrypt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    PedersenCommitment,
    Share,
    Complaint,
    DisputedShare,
    FeldmanCommitment,
    FeldmanComplaint,
    ReconstructionShare,
    PublicKey,
    Model,
    Ciphertext,
    TernaryTensor,
    AggregateCiphertext,
    PartialDecryption,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub round: u64,
    pub phase: Phase,
    pub kind: MessageKind,
    pub from: Party,
    pub to: Party,
    pub bytes: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Bus {
    round: u64,
    records: Vec<MessageRecord>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_round(&mut self, round: u64) {
        self.round = round;
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn send(&mut self, phase: Phase, kind: MessageKind, from: Party, to: Party, bytes: usize) {
        self.records.push(MessageRecord {
            round: self.round,
            phase,
            kind,
            from,
            to,
            bytes,
        });
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn count<F: Fn(&MessageRecord) -> bool>(&self, pred: F) -> usize {
        self.records.iter().filter(|r| pred(r)).count()
    }

    pub fn bytes<F: Fn(&MessageRecord) -> bool>(&self, pred: F) -> usize {
        self.records.iter().filter(|r| pred(r)).map(|r| r.bytes).sum()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }
}
