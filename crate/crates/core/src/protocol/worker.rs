use super::{EchoMessage, Message, ProtocolError};
use crate::geometry::{echo_check, norm_ratio, DenseVector, GradientBasis};

/// A fault-free worker during one round.
#[derive(Debug, Clone)]
pub struct WorkerState {
    id: usize,
    basis: GradientBasis,
    local_gradient: DenseVector,
}

impl WorkerState {
    pub fn new(id: usize, local_gradient: DenseVector) -> Self {
        let basis = GradientBasis::new(local_gradient.dim());
        Self {
            id,
            basis,
            local_gradient,
        }
    }

    pub fn with_basis(
        id: usize,
        basis: GradientBasis,
        local_gradient: DenseVector,
    ) -> Result<Self, ProtocolError> {
        local_gradient.check_dim(basis.dim())?;
        if let Some(&last) = basis.owner_ids().last() {
            if last >= id {
                return Err(ProtocolError::OutOfOrder {
                    sender: last,
                    receiver: id,
                });
            }
        }
        Ok(Self {
            id,
            basis,
            local_gradient,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn basis(&self) -> &GradientBasis {
        &self.basis
    }

    pub fn local_gradient(&self) -> &DenseVector {
        &self.local_gradient
    }

    /// What this worker broadcasts in its slot; see [`slot_message`].
    pub fn slot_action(&self, r: f64) -> Message {
        slot_message(&self.basis, &self.local_gradient, r)
    }

    /// Handles a transmission from an earlier slot. Only raw gradients that
    /// are independent of the stored ones are kept; returns whether the
    /// basis grew.
    pub fn overhear(&mut self, sender: usize, msg: &Message) -> Result<bool, ProtocolError> {
        if sender >= self.id {
            return Err(ProtocolError::OutOfOrder {
                sender,
                receiver: self.id,
            });
        }
        match msg {
            Message::Raw(g) if g.dim() == self.basis.dim() => {
                Ok(self.basis.insert(sender, g.clone())?)
            }
            _ => Ok(false),
        }
    }
}

/// The message a fault-free worker holding `basis` sends for gradient `g`.
///
/// Echoes when the projection onto the overheard span passes the send
/// check; otherwise, or when the echo would be degenerate, sends the raw
/// gradient.
pub fn slot_message(basis: &GradientBasis, g: &DenseVector, r: f64) -> Message {
    let raw = || Message::Raw(g.clone());
    if basis.is_empty() {
        return raw();
    }
    let Ok(projection) = basis.project(g) else {
        return raw();
    };
    if !echo_check(&projection, g, r) {
        return raw();
    }
    match norm_ratio(g, &projection.echo_gradient) {
        Ok(ratio) => Message::Echo(EchoMessage {
            ratio,
            coeffs: projection.coefficients,
            ids: basis.owner_ids().to_vec(),
        }),
        Err(_) => raw(),
    }
}
