//! Synthetic strongly convex quadratic costs and a stochastic gradient oracle.
//!
//! `Q(w) = ½ (w − w*)ᵀ H (w − w*)` with `H = Rᵀ D R`, `D` diagonal with
//! entries in `[μ, L]` and `R` a fixed orthogonal matrix. The extreme
//! eigenvalues are the strong-convexity and smoothness constants, so both
//! inequalities are tight.
//!
//! Stochastic gradients are `∇Q(w) + σ‖∇Q(w)‖ z` with `z ~ N(0, I/d)`: unbiased,
//! with `E‖g − ∇Q(w)‖² = σ²‖∇Q(w)‖²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DenseVector, GeometryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("strong convexity constant must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("smoothness constant {l} is below strong convexity constant {mu}")]
    LBelowMu { mu: f64, l: f64 },
    #[error("isotropic spectrum needs mu == L (got mu = {mu}, L = {l})")]
    AnisotropicIsotropic { mu: f64, l: f64 },
    #[error("spectrum length {actual} does not match optimum dimension {expected}")]
    SpectrumLength { expected: usize, actual: usize },
    #[error("noise level must be a finite non-negative number, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How the `d` Hessian eigenvalues are laid out between `μ` and `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    /// Every eigenvalue equals `μ = L`.
    #[default]
    Isotropic,
    /// First half `μ`, second half `L`.
    TwoPoint,
    /// Evenly spaced from `μ` to `L`.
    Linear,
}

impl SpectrumMode {
    pub fn build(self, dim: usize, mu: f64, l: f64) -> Result<Vec<f64>, CostError> {
        validate_constants(mu, l)?;
        let spectrum = match self {
            SpectrumMode::Isotropic => {
                if mu != l {
                    return Err(CostError::AnisotropicIsotropic { mu, l });
                }
                vec![mu; dim]
            }
            SpectrumMode::TwoPoint => (0..dim).map(|i| if i < dim / 2 { mu } else { l }).collect(),
            SpectrumMode::Linear if dim == 1 => vec![mu],
            SpectrumMode::Linear => (0..dim)
                .map(|i| {
                    if i + 1 == dim {
                        l
                    } else {
                        mu + (l - mu) * i as f64 / (dim - 1) as f64
                    }
                })
                .collect(),
        };
        Ok(spectrum)
    }
}

fn validate_constants(mu: f64, l: f64) -> Result<(), CostError> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(CostError::NonPositiveMu(mu));
    }
    if !(l >= mu) || !l.is_finite() {
        return Err(CostError::LBelowMu { mu, l });
    }
    Ok(())
}

/// Orthogonal change of basis built from seeded Householder reflections.
#[derive(Debug, Clone)]
pub struct Rotation {
    reflectors: Vec<Vec<f64>>,
}

impl Rotation {
    /// Number of reflections composed for dimension `dim`.
    pub fn reflector_count(dim: usize) -> usize {
        dim.min(16)
    }

    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reflectors = (0..Self::reflector_count(dim))
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        Self { reflectors }
    }

    /// `R x`
    pub fn apply(&self, x: &mut [f64]) {
        for u in &self.reflectors {
            reflect(u, x);
        }
    }

    /// `Rᵀ x`
    pub fn apply_transpose(&self, x: &mut [f64]) {
        for u in self.reflectors.iter().rev() {
            reflect(u, x);
        }
    }
}

fn reflect(u: &[f64], x: &mut [f64]) {
    let proj: f64 = u.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    for (xi, ui) in x.iter_mut().zip(u) {
        *xi -= 2.0 * proj * ui;
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticCost {
    optimum: DenseVector,
    spectrum: Vec<f64>,
    rotation_seed: Option<u64>,
    rotation: Option<Rotation>,
    mu: f64,
    l: f64,
}

impl QuadraticCost {
    /// A quadratic with the given optimum and Hessian eigenvalues. With a
    /// `rotation_seed` the eigenbasis is a seeded random rotation; without
    /// one the Hessian is diagonal.
    pub fn new(
        optimum: DenseVector,
        spectrum: Vec<f64>,
        rotation_seed: Option<u64>,
    ) -> Result<Self, CostError> {
        if spectrum.len() != optimum.dim() {
            return Err(CostError::SpectrumLength {
                expected: optimum.dim(),
                actual: spectrum.len(),
            });
        }
        let mu = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        let l = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        validate_constants(mu, l)?;
        let rotation = rotation_seed.map(|seed| Rotation::seeded(optimum.dim(), seed));
        Ok(Self {
            optimum,
            spectrum,
            rotation_seed,
            rotation,
            mu,
            l,
        })
    }

    pub fn dim(&self) -> usize {
        self.optimum.dim()
    }

    pub fn optimum(&self) -> &DenseVector {
        &self.optimum
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn rotation_seed(&self) -> Option<u64> {
        self.rotation_seed
    }

    /// Strong convexity constant `μ` (smallest eigenvalue).
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smoothness constant `L` (largest eigenvalue).
    pub fn l(&self) -> f64 {
        self.l
    }

    /// `H v`
    pub fn hessian_apply(&self, v: &DenseVector) -> DenseVector {
        let mut x = v.as_slice().to_vec();
        if let Some(rot) = &self.rotation {
            rot.apply(&mut x);
        }
        for (xi, lambda) in x.iter_mut().zip(&self.spectrum) {
            *xi *= lambda;
        }
        if let Some(rot) = &self.rotation {
            rot.apply_transpose(&mut x);
        }
        DenseVector::from_vec_unchecked(x)
    }

    pub fn value(&self, w: &DenseVector) -> f64 {
        let delta = w - &self.optimum;
        0.5 * delta.dot(&self.hessian_apply(&delta))
    }

    /// `∇Q(w) = H (w − w*)`
    pub fn true_gradient(&self, w: &DenseVector) -> Result<DenseVector, CostError> {
        w.check_dim(self.dim())?;
        Ok(self.hessian_apply(&(w - &self.optimum)))
    }
}

/// Relative-variance noise standing in for random data batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self, CostError> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(CostError::InvalidSigma(sigma));
        }
        Ok(Self { sigma })
    }

    pub fn noiseless() -> Self {
        Self { sigma: 0.0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Draws a stochastic estimate around an already computed true gradient.
    pub fn perturb<R: Rng + ?Sized>(&self, true_grad: &DenseVector, rng: &mut R) -> DenseVector {
        let scale = self.sigma * true_grad.norm() / (true_grad.dim() as f64).sqrt();
        if scale == 0.0 {
            return true_grad.clone();
        }
        let entries = true_grad
            .iter()
            .map(|&g| {
                let z: f64 = rng.sample(StandardNormal);
                g + scale * z
            })
            .collect();
        DenseVector::from_vec_unchecked(entries)
    }
}

/// One worker's stochastic gradient at `w`.
pub fn sample_gradient<R: Rng + ?Sized>(
    cost: &QuadraticCost,
    noise: &NoiseModel,
    w: &DenseVector,
    rng: &mut R,
) -> Result<DenseVector, CostError> {
    let grad = cost.true_gradient(w)?;
    Ok(noise.perturb(&grad, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let cost = QuadraticCost::new(v(&[1.0, -2.0, 0.5]), vec![1.0, 2.0, 3.0], Some(7)).unwrap();
        let g = cost.true_gradient(&v(&[1.0, -2.0, 0.5])).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn identity_and_diagonal_hessians() {
        let cost = QuadraticCost::new(v(&[0.0, 0.0]), vec![1.0, 1.0], None).unwrap();
        assert_eq!(
            cost.true_gradient(&v(&[2.0, -3.0])).unwrap(),
            v(&[2.0, -3.0])
        );

        let cost = QuadraticCost::new(v(&[1.0, 1.0]), vec![1.0, 4.0], None).unwrap();
        assert_eq!(cost.true_gradient(&v(&[2.0, 2.0])).unwrap(), v(&[1.0, 4.0]));
    }

    #[test]
    fn rotation_is_orthogonal() {
        let rot = Rotation::seeded(5, 3);
        let mut x = vec![1.0, 2.0, -1.0, 0.5, 3.0];
        let norm0: f64 = x.iter().map(|a| a * a).sum();
        let orig = x.clone();
        rot.apply(&mut x);
        let norm1: f64 = x.iter().map(|a| a * a).sum();
        assert!((norm0 - norm1).abs() < 1e-12);
        rot.apply_transpose(&mut x);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_modes_hit_endpoints() {
        let two = SpectrumMode::TwoPoint.build(4, 0.5, 2.0).unwrap();
        assert_eq!(two, vec![0.5, 0.5, 2.0, 2.0]);
        let lin = SpectrumMode::Linear.build(3, 1.0, 3.0).unwrap();
        assert_eq!(lin, vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            SpectrumMode::Isotropic.build(3, 1.0, 2.0),
            Err(CostError::AnisotropicIsotropic { .. })
        ));
        assert!(matches!(
            SpectrumMode::Linear.build(3, 2.0, 1.0),
            Err(CostError::LBelowMu { .. })
        ));
        assert!(matches!(
            SpectrumMode::Linear.build(3, 0.0, 1.0),
            Err(CostError::NonPositiveMu(_))
        ));
    }

    #[test]
    fn constants_follow_spectrum() {
        let cost = QuadraticCost::new(v(&[0.0; 3]), vec![2.0, 0.5, 1.0], Some(1)).unwrap();
        assert_eq!(cost.mu(), 0.5);
        assert_eq!(cost.l(), 2.0);
    }

    #[test]
    fn noiseless_and_zero_gradient_samples() {
        let cost = QuadraticCost::new(v(&[0.0, 0.0]), vec![1.0, 3.0], Some(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = v(&[1.0, 1.0]);
        let exact = cost.true_gradient(&w).unwrap();
        let g = sample_gradient(&cost, &NoiseModel::noiseless(), &w, &mut rng).unwrap();
        assert_eq!(g, exact);

        let noisy = NoiseModel::new(0.5).unwrap();
        let at_opt = sample_gradient(&cost, &noisy, &v(&[0.0, 0.0]), &mut rng).unwrap();
        assert!(at_opt.is_zero());
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(NoiseModel::new(-0.1).is_err());
        assert!(NoiseModel::new(f64::NAN).is_err());
    }
}
