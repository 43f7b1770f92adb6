use std::collections::BTreeSet;

use super::{Message, ProtocolError};
use crate::geometry::DenseVector;

/// The server's per-round store `G`: one slot per worker, empty until the
/// worker transmits.
#[derive(Debug, Clone)]
pub struct ServerSlotTable {
    dim: usize,
    entries: Vec<Option<DenseVector>>,
    detected: BTreeSet<usize>,
}

/// Reconstructed gradients for every worker plus the workers caught lying.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub gradients: Vec<DenseVector>,
    pub detected: BTreeSet<usize>,
}

impl ServerSlotTable {
    pub fn new(n: usize, dim: usize) -> Self {
        Self {
            dim,
            entries: vec![None; n],
            detected: BTreeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, id: usize) -> Option<&DenseVector> {
        self.entries.get(id).and_then(Option::as_ref)
    }

    pub fn is_filled(&self, id: usize) -> bool {
        self.entry(id).is_some()
    }

    pub fn detected(&self) -> &BTreeSet<usize> {
        &self.detected
    }

    /// Records `sender`'s transmission.
    ///
    /// An echo referencing an empty slot cannot come from a fault-free
    /// worker, so the sender is flagged and stored as the zero vector. The
    /// same applies to messages no fault-free worker could produce: malformed
    /// echoes, wrong dimensions, or reconstructions that overflow.
    pub fn receive(&mut self, sender: usize, msg: &Message) -> Result<(), ProtocolError> {
        let n = self.n();
        let slot = self
            .entries
            .get(sender)
            .ok_or(ProtocolError::UnknownSender { sender, n })?;
        if slot.is_some() {
            return Err(ProtocolError::DuplicateTransmission { sender });
        }
        let value = match msg {
            Message::Raw(g) if g.dim() == self.dim => Some(g.clone()),
            Message::Raw(_) => None,
            Message::Echo(echo) => {
                if echo.is_well_formed() {
                    self.reconstruct(echo.ratio, &echo.coeffs, &echo.ids)
                } else {
                    None
                }
            }
        };
        let value = value.unwrap_or_else(|| {
            self.detected.insert(sender);
            DenseVector::zeros(self.dim)
        });
        self.entries[sender] = Some(value);
        Ok(())
    }

    // k · Σ x_i G[i], or None when some referenced slot is still empty.
    fn reconstruct(&self, ratio: f64, coeffs: &[f64], ids: &[usize]) -> Option<DenseVector> {
        let mut acc = vec![0.0; self.dim];
        for (&id, &c) in ids.iter().zip(coeffs) {
            let column = self.entry(id)?;
            for (a, v) in acc.iter_mut().zip(column.iter()) {
                *a += c * v;
            }
        }
        acc.iter_mut().for_each(|a| *a *= ratio);
        DenseVector::new(acc).ok()
    }

    /// Closes the round: silent workers are flagged and zero-filled.
    pub fn finalize(mut self) -> SlotOutcome {
        let dim = self.dim;
        let gradients = self
            .entries
            .into_iter()
            .enumerate()
            .map(|(id, entry)| {
                entry.unwrap_or_else(|| {
                    self.detected.insert(id);
                    DenseVector::zeros(dim)
                })
            })
            .collect();
        SlotOutcome {
            gradients,
            detected: self.detected,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::EchoMessage;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn echo(ratio: f64, coeffs: &[f64], ids: &[usize]) -> Message {
        Message::Echo(EchoMessage {
            ratio,
            coeffs: coeffs.to_vec(),
            ids: ids.to_vec(),
        })
    }

    #[test]
    fn reconstructs_echo() {
        let mut t = ServerSlotTable::new(4, 2);
        t.receive(1, &Message::Raw(v(&[1.0, 0.0]))).unwrap();
        t.receive(2, &Message::Raw(v(&[0.0, 1.0]))).unwrap();
        t.receive(3, &echo(2.0, &[0.6, 0.8], &[1, 2])).unwrap();
        let g = t.entry(3).unwrap();
        assert!(g.distance(&v(&[1.2, 1.6])) < 1e-15);
        assert!(t.detected().is_empty());
    }

    #[test]
    fn echo_to_empty_slot_is_detected() {
        let mut t = ServerSlotTable::new(6, 2);
        t.receive(0, &Message::Raw(v(&[1.0, 0.0]))).unwrap();
        t.receive(2, &echo(1.0, &[1.0, 1.0], &[0, 5])).unwrap();
        assert_eq!(t.entry(2), Some(&v(&[0.0, 0.0])));
        assert!(t.detected().contains(&2));
    }

    #[test]
    fn raw_is_stored_verbatim() {
        let mut t = ServerSlotTable::new(2, 3);
        t.receive(0, &Message::Raw(v(&[1.0, -2.0, 3.0]))).unwrap();
        assert_eq!(t.entry(0), Some(&v(&[1.0, -2.0, 3.0])));
    }

    #[test]
    fn duplicates_and_unknown_senders_are_errors() {
        let mut t = ServerSlotTable::new(2, 1);
        t.receive(0, &Message::Raw(v(&[1.0]))).unwrap();
        assert_eq!(
            t.receive(0, &Message::Raw(v(&[1.0]))),
            Err(ProtocolError::DuplicateTransmission { sender: 0 })
        );
        assert_eq!(
            t.receive(7, &Message::Raw(v(&[1.0]))),
            Err(ProtocolError::UnknownSender { sender: 7, n: 2 })
        );
    }

    #[test]
    fn malformed_messages_are_detected() {
        let mut t = ServerSlotTable::new(4, 2);
        t.receive(0, &Message::Raw(v(&[1.0, 0.0]))).unwrap();
        t.receive(1, &echo(1.0, &[1.0], &[0, 0])).unwrap();
        t.receive(2, &Message::Raw(v(&[1.0]))).unwrap();
        t.receive(3, &echo(f64::MAX, &[f64::MAX], &[0])).unwrap();
        assert_eq!(
            t.detected().iter().copied().collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn finalize_zero_fills_silent_workers() {
        let mut t = ServerSlotTable::new(3, 2);
        t.receive(1, &Message::Raw(v(&[1.0, 1.0]))).unwrap();
        let out = t.finalize();
        assert_eq!(out.gradients.len(), 3);
        assert!(out.gradients[0].is_zero() && out.gradients[2].is_zero());
        assert_eq!(out.detected.into_iter().collect::<Vec<_>>(), vec![0, 2]);
    }
}
