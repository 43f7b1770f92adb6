use crate::geometry::DenseVector;

/// The compact stand-in for a raw gradient: `(‖g‖/‖g*‖, x, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoMessage {
    /// Norm ratio `k`.
    pub ratio: f64,
    /// Coefficients `x`, aligned with `ids`.
    pub coeffs: Vec<f64>,
    /// Ascending ids of the workers whose raw gradients span the echo.
    pub ids: Vec<usize>,
}

impl EchoMessage {
    /// Structural validity: non-empty, strictly ascending ids, one finite
    /// coefficient per id and a finite positive ratio.
    pub fn is_well_formed(&self) -> bool {
        !self.ids.is_empty()
            && self.ids.len() == self.coeffs.len()
            && self.ids.windows(2).all(|w| w[0] < w[1])
            && self.coeffs.iter().all(|c| c.is_finite())
            && self.ratio.is_finite()
            && self.ratio > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Raw(DenseVector),
    Echo(EchoMessage),
}

impl Message {
    pub fn is_echo(&self) -> bool {
        matches!(self, Message::Echo(_))
    }

    pub fn as_raw(&self) -> Option<&DenseVector> {
        match self {
            Message::Raw(g) => Some(g),
            Message::Echo(_) => None,
        }
    }

    pub fn as_echo(&self) -> Option<&EchoMessage> {
        match self {
            Message::Raw(_) => None,
            Message::Echo(e) => Some(e),
        }
    }
}
