//! The Echo-CGC round: TDMA slots, echo messages, server reconstruction,
//! the CGC filter and the parameter update.
//!
//! Worker `i` transmits in slot `i` (ids are zero-based). Every transmission
//! reaches the server and all workers as the same [`Message`] value.

mod adversary;
mod cgc;
mod engine;
mod message;
mod server;
mod worker;

use thiserror::Error;

pub use adversary::{Adversary, AdversaryKind, RoundContext};
pub use cgc::{cgc_apply, cgc_filter, CgcOutput};
pub use engine::{run_round, ProtocolParams, RoundEnv, RoundOutcome, RoundRngs, Simulation};
pub use message::{EchoMessage, Message};
pub use server::{ServerSlotTable, SlotOutcome};
pub use worker::{slot_message, WorkerState};

use crate::cost::CostError;
use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("worker {sender} transmitted twice in one round")]
    DuplicateTransmission { sender: usize },
    #[error("unknown sender {sender} (n = {n})")]
    UnknownSender { sender: usize, n: usize },
    #[error("worker {receiver} cannot overhear slot {sender}, which is not earlier")]
    OutOfOrder { sender: usize, receiver: usize },
    #[error("invalid protocol configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cost(#[from] CostError),
}
