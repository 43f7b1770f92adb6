//! Bit counts for worker-to-server traffic.
//!
//! A raw gradient costs `header + d·scalar` bits. An echo message carries the
//! norm ratio and one coefficient per referenced worker plus the worker ids:
//! `header + scalar·(1 + |coeffs|) + id·|ids|`. The baseline every prior
//! algorithm pays is `n` raw gradients per round.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::protocol::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub bits_per_scalar: u32,
    pub bits_per_id: u32,
    pub header_bits: u32,
}

impl CostModel {
    /// 64-bit scalars, `⌈log₂ n⌉`-bit ids, no framing.
    pub fn for_workers(n: usize) -> Self {
        Self {
            bits_per_scalar: 64,
            bits_per_id: id_bits(n),
            header_bits: 0,
        }
    }

    pub fn raw_bits(&self, d: usize) -> u64 {
        u64::from(self.header_bits) + d as u64 * u64::from(self.bits_per_scalar)
    }

    pub fn echo_bits(&self, refs: usize) -> u64 {
        u64::from(self.header_bits)
            + u64::from(self.bits_per_scalar) * (1 + refs as u64)
            + u64::from(self.bits_per_id) * refs as u64
    }

    /// Traffic of the raw-gradient baseline: `n` raw messages.
    pub fn baseline_bits(&self, n: usize, d: usize) -> u64 {
        n as u64 * self.raw_bits(d)
    }
}

/// `⌈log₂ n⌉`, the width of an id in `0..n`.
pub fn id_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

pub fn message_bits(model: &CostModel, msg: &Message, d: usize) -> u64 {
    match msg {
        Message::Raw(_) => model.raw_bits(d),
        Message::Echo(echo) => {
            u64::from(model.header_bits)
                + u64::from(model.bits_per_scalar) * (1 + echo.coeffs.len() as u64)
                + u64::from(model.bits_per_id) * echo.ids.len() as u64
        }
    }
}

/// What one round of the protocol cost and how it went.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round_index: usize,
    pub bits_sent: u64,
    /// Echo messages sent (by anyone, Byzantine included).
    pub echo_count: usize,
    pub raw_count: usize,
    /// Fault-free workers whose sampled gradient lies in the echo ball.
    pub ball_count: usize,
    pub detections: BTreeSet<usize>,
    /// `‖wᵗ − w*‖²` at the start of the round.
    pub distance_sq: f64,
    /// `‖wᵗ⁺¹ − w*‖²` after the update.
    pub next_distance_sq: f64,
}

impl RoundMetrics {
    pub fn messages(&self) -> usize {
        self.echo_count + self.raw_count
    }

    /// Per-round contraction `‖wᵗ⁺¹ − w*‖² / ‖wᵗ − w*‖²`.
    pub fn contraction(&self) -> f64 {
        self.next_distance_sq / self.distance_sq
    }
}

/// Bits sent relative to the raw-gradient baseline.
pub fn round_ratio(metrics: &RoundMetrics, model: &CostModel, n: usize, d: usize) -> f64 {
    metrics.bits_sent as f64 / model.baseline_bits(n, d) as f64
}

/// Per-message cost of the largest possible echo (`min(n − 1, d)` references)
/// relative to a raw gradient. Multiplied by `n` messages and divided by the
/// `n`-message baseline it is also the most echo traffic can add to a round's
/// ratio.
pub fn echo_overhead_fraction(model: &CostModel, n: usize, d: usize) -> f64 {
    let refs = n.saturating_sub(1).min(d);
    model.echo_bits(refs) as f64 / model.raw_bits(d) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DenseVector;
    use crate::protocol::EchoMessage;

    fn echo(refs: usize) -> Message {
        Message::Echo(EchoMessage {
            ratio: 1.0,
            coeffs: vec![0.5; refs],
            ids: (0..refs).collect(),
        })
    }

    #[test]
    fn id_widths() {
        assert_eq!(id_bits(1), 0);
        assert_eq!(id_bits(2), 1);
        assert_eq!(id_bits(100), 7);
        assert_eq!(id_bits(128), 7);
        assert_eq!(id_bits(129), 8);
    }

    #[test]
    fn message_sizes() {
        let model = CostModel::for_workers(100);
        let raw = Message::Raw(DenseVector::zeros(10_000));
        assert_eq!(message_bits(&model, &raw, 10_000), 640_000);
        assert_eq!(message_bits(&model, &echo(3), 10_000), 277);
        assert_eq!(model.echo_bits(3), 277);
        let one = Message::Raw(DenseVector::zeros(1));
        assert_eq!(message_bits(&model, &one, 1), 64);
    }

    fn metrics(bits: u64) -> RoundMetrics {
        RoundMetrics {
            round_index: 0,
            bits_sent: bits,
            echo_count: 0,
            raw_count: 0,
            ball_count: 0,
            detections: BTreeSet::new(),
            distance_sq: 1.0,
            next_distance_sq: 0.5,
        }
    }

    #[test]
    fn ratios() {
        let (n, d) = (100, 10_000);
        let model = CostModel::for_workers(n);
        let all_raw = metrics(n as u64 * 640_000);
        assert_eq!(round_ratio(&all_raw, &model, n, d), 1.0);

        let mostly_echo = metrics(640_000 + 99 * 277);
        let ratio = round_ratio(&mostly_echo, &model, n, d);
        assert!((ratio - (0.01 + 99.0 * 277.0 / 64e6)).abs() < 1e-15);
        assert!((ratio - 0.0104).abs() < 1e-4);

        // all echo with d much larger than n tends to zero
        let huge_d = 1_000_000_000;
        let echoes = metrics(n as u64 * model.echo_bits(1));
        assert!(round_ratio(&echoes, &model, n, huge_d) < 1e-6);
    }
}
