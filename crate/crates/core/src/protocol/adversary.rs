use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EchoMessage, Message, ProtocolError, ServerSlotTable};
use crate::geometry::DenseVector;

/// Norm ratio claimed by a corrupt-coefficient echo.
const CORRUPT_ECHO_RATIO: f64 = 1e3;

/// Behaviour of the Byzantine workers.
///
/// Byzantine workers are omniscient: they see the parameter, the true
/// gradient and every fault-free local gradient of the round. They still
/// send one message per slot, received identically by everyone.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Byzantine slots follow the protocol.
    #[default]
    None,
    /// Raw zero vector.
    Zero,
    /// Raw `−∇Q(w)`.
    SignFlip,
    /// Raw `scale · ∇Q(w)`.
    LargeNorm { scale: f64 },
    /// Raw vector with the median fault-free norm, turned away from `∇Q(w)`
    /// by `scale · π` radians towards a random orthogonal direction.
    WithinThreshold { scale: f64 },
    /// Echo that references the last slot, which has not transmitted yet.
    BogusEchoMissingId,
    /// Echo over all earlier slots with a huge ratio and negated
    /// coefficients.
    BogusEchoCorruptCoeffs,
}

impl AdversaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryKind::None => "none",
            AdversaryKind::Zero => "zero",
            AdversaryKind::SignFlip => "sign_flip",
            AdversaryKind::LargeNorm { .. } => "large_norm",
            AdversaryKind::WithinThreshold { .. } => "within_threshold",
            AdversaryKind::BogusEchoMissingId => "bogus_echo_missing_id",
            AdversaryKind::BogusEchoCorruptCoeffs => "bogus_echo_corrupt_coeffs",
        }
    }
}

/// What a Byzantine worker knows when its slot comes up.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub round: usize,
    pub w: &'a DenseVector,
    pub true_gradient: &'a DenseVector,
    /// Local gradients of fault-free workers, `None` at Byzantine ids.
    pub honest_gradients: &'a [Option<DenseVector>],
    pub table: &'a ServerSlotTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adversary {
    kind: AdversaryKind,
    byzantine_ids: BTreeSet<usize>,
}

impl Adversary {
    pub fn none() -> Self {
        Self {
            kind: AdversaryKind::None,
            byzantine_ids: BTreeSet::new(),
        }
    }

    /// With [`AdversaryKind::None`] the id set is ignored.
    pub fn new(kind: AdversaryKind, byzantine_ids: impl IntoIterator<Item = usize>) -> Self {
        let byzantine_ids = match kind {
            AdversaryKind::None => BTreeSet::new(),
            _ => byzantine_ids.into_iter().collect(),
        };
        Self {
            kind,
            byzantine_ids,
        }
    }

    pub fn kind(&self) -> AdversaryKind {
        self.kind
    }

    pub fn byzantine_ids(&self) -> &BTreeSet<usize> {
        &self.byzantine_ids
    }

    pub fn count(&self) -> usize {
        self.byzantine_ids.len()
    }

    pub fn is_byzantine(&self, id: usize) -> bool {
        self.byzantine_ids.contains(&id)
    }

    pub fn validate(&self, n: usize, f: usize) -> Result<(), ProtocolError> {
        if self.byzantine_ids.len() > f {
            return Err(ProtocolError::Invalid(format!(
                "{} Byzantine workers exceed f = {f}",
                self.byzantine_ids.len()
            )));
        }
        if let Some(&id) = self.byzantine_ids.iter().find(|&&id| id >= n) {
            return Err(ProtocolError::Invalid(format!(
                "Byzantine id {id} out of range (n = {n})"
            )));
        }
        if let AdversaryKind::LargeNorm { scale } | AdversaryKind::WithinThreshold { scale } =
            self.kind
        {
            if !scale.is_finite() {
                return Err(ProtocolError::Invalid(format!(
                    "adversary scale {scale} is not finite"
                )));
            }
        }
        Ok(())
    }

    /// The message Byzantine worker `id` sends in its slot.
    pub fn message<R: Rng + ?Sized>(
        &self,
        id: usize,
        ctx: &RoundContext<'_>,
        rng: &mut R,
    ) -> Message {
        let grad = ctx.true_gradient;
        let n = ctx.table.n();
        match self.kind {
            AdversaryKind::None | AdversaryKind::Zero => {
                Message::Raw(DenseVector::zeros(grad.dim()))
            }
            AdversaryKind::SignFlip => Message::Raw(-grad),
            AdversaryKind::LargeNorm { scale } => Message::Raw(grad.scaled(scale)),
            AdversaryKind::WithinThreshold { scale } => Message::Raw(turned_vector(
                grad,
                median_honest_norm(ctx),
                scale * PI,
                rng,
            )),
            AdversaryKind::BogusEchoMissingId => Message::Echo(EchoMessage {
                ratio: 1.0,
                coeffs: vec![1.0],
                ids: vec![n - 1],
            }),
            AdversaryKind::BogusEchoCorruptCoeffs => {
                let mut ids: Vec<usize> = (0..id).filter(|&i| ctx.table.is_filled(i)).collect();
                if ids.is_empty() {
                    // Nothing to reference yet; point at its own empty slot.
                    ids.push(id);
                }
                Message::Echo(EchoMessage {
                    ratio: CORRUPT_ECHO_RATIO,
                    coeffs: vec![-1.0; ids.len()],
                    ids,
                })
            }
        }
    }
}

fn median_honest_norm(ctx: &RoundContext<'_>) -> f64 {
    let mut norms: Vec<f64> = ctx
        .honest_gradients
        .iter()
        .flatten()
        .map(DenseVector::norm)
        .collect();
    if norms.is_empty() {
        return ctx.true_gradient.norm();
    }
    norms.sort_by(f64::total_cmp);
    let mid = norms.len() / 2;
    if norms.len() % 2 == 1 {
        norms[mid]
    } else {
        0.5 * (norms[mid - 1] + norms[mid])
    }
}

// A vector of length `norm` at angle `angle` from `reference`.
fn turned_vector<R: Rng + ?Sized>(
    reference: &DenseVector,
    norm: f64,
    angle: f64,
    rng: &mut R,
) -> DenseVector {
    let d = reference.dim();
    let ref_norm = reference.norm();
    if ref_norm == 0.0 || norm == 0.0 {
        return DenseVector::zeros(d);
    }
    let u = reference.scaled(1.0 / ref_norm);
    let mut out = u.scaled(angle.cos());
    if d > 1 {
        let orth = loop {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mut z = DenseVector::from_vec_unchecked(z);
            let along = z.dot(&u);
            z.axpy(-along, &u);
            let zn = z.norm();
            if zn > 1e-9 {
                break z.scaled(1.0 / zn);
            }
        };
        out.axpy(angle.sin(), &orth);
    }
    out.scaled(norm)
}
