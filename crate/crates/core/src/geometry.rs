//! Dense vectors, the overheard-gradient basis and least-squares projection.
//!
//! A worker keeps the raw gradients it overheard earlier in the round as the
//! columns of a matrix `A`. The echo gradient is the projection `A x` of the
//! worker's own gradient onto the span of those columns, with `x = A⁺ g` the
//! Moore–Penrose solution of the normal equations `(AᵀA) x = Aᵀ g`.
//!
//! Gram matrices of nearly parallel gradients are badly conditioned, so the
//! basis carries a thin QR factorization `A = Q R` that is extended one
//! column at a time. The coefficients come from `R x = Qᵀ g`, which is the
//! same vector the normal equations define.

use std::fmt;
use std::ops::{Add, Index, Neg, Sub};

use thiserror::Error;

/// Relative tolerance used to decide linear independence of a new column.
pub const INDEPENDENCE_TOL: f64 = 1e-8;

/// An echo gradient whose norm is at most this fraction of `‖g‖` is
/// treated as zero, forcing a raw broadcast.
pub const ZERO_ECHO_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("vector must have at least one entry")]
    EmptyVector,
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("projection onto an empty basis")]
    EmptyBasis,
    #[error("normal-equations matrix is numerically singular (pivot ratio {ratio:e})")]
    SingularGram { ratio: f64 },
    #[error("echo gradient is degenerate (norm {norm:e})")]
    DegenerateEcho { norm: f64 },
    #[error("owner id {id} does not follow the last stored id {last}")]
    UnorderedOwner { id: usize, last: usize },
}

/// A finite, non-empty vector of `f64` coordinates.
#[derive(Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self, GeometryError> {
        if entries.is_empty() {
            return Err(GeometryError::EmptyVector);
        }
        if let Some((index, &value)) = entries.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GeometryError::NonFinite { index, value });
        }
        Ok(Self(entries))
    }

    /// The zero vector of dimension `dim`.
    ///
    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self(vec![0.0; dim])
    }

    /// Builds a vector from entries already known to be finite.
    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        debug_assert!(!entries.is_empty());
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn check_dim(&self, expected: usize) -> Result<(), GeometryError> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                expected,
                actual: self.dim(),
            })
        }
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = GeometryError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl Add for &DenseVector {
    type Output = DenseVector;

    fn add(self, rhs: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        DenseVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &DenseVector {
    type Output = DenseVector;

    fn sub(self, rhs: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        DenseVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &DenseVector {
    type Output = DenseVector;

    fn neg(self) -> DenseVector {
        DenseVector(self.0.iter().map(|v| -v).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of projecting a gradient onto a [`GradientBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `x = A⁺ g`, one coefficient per basis column.
    pub coefficients: Vec<f64>,
    /// `A x`, the echo gradient.
    pub echo_gradient: DenseVector,
    /// `‖g − A x‖`
    pub residual_norm: f64,
}

/// Linearly independent gradients overheard in the current round.
///
/// Columns are kept in insertion (slot) order together with the id of the
/// worker that sent them. Owner ids are strictly ascending.
#[derive(Debug, Clone)]
pub struct GradientBasis {
    dim: usize,
    columns: Vec<DenseVector>,
    owner_ids: Vec<usize>,
    // Orthonormal columns of Q.
    q: Vec<Vec<f64>>,
    // Column k of the upper-triangular R, holding k + 1 entries.
    r: Vec<Vec<f64>>,
}

impl GradientBasis {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            columns: Vec::new(),
            owner_ids: Vec::new(),
            q: Vec::new(),
            r: Vec::new(),
        }
    }

    /// Builds a basis from `(owner, column)` pairs, skipping dependent columns.
    pub fn from_columns<I>(dim: usize, columns: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = (usize, DenseVector)>,
    {
        let mut basis = Self::new(dim);
        for (id, column) in columns {
            basis.insert(id, column)?;
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[DenseVector] {
        &self.columns
    }

    pub fn owner_ids(&self) -> &[usize] {
        &self.owner_ids
    }

    pub fn clear(&mut self) {
        self.columns.clear();
        self.owner_ids.clear();
        self.q.clear();
        self.r.clear();
    }

    /// Appends `g` if it is linearly independent of the stored columns.
    ///
    /// Returns whether the column was stored.
    pub fn insert(&mut self, id: usize, g: DenseVector) -> Result<bool, GeometryError> {
        g.check_dim(self.dim)?;
        if let Some(&last) = self.owner_ids.last() {
            if id <= last {
                return Err(GeometryError::UnorderedOwner { id, last });
            }
        }
        let g_norm = g.norm();
        if g_norm == 0.0 {
            return Ok(false);
        }
        let (coords, residual) = self.orthogonal_split(g.as_slice());
        let residual_norm = dot(&residual, &residual).sqrt();
        if residual_norm <= INDEPENDENCE_TOL * g_norm {
            return Ok(false);
        }
        let mut r_col = coords;
        r_col.push(residual_norm);
        self.q
            .push(residual.iter().map(|v| v / residual_norm).collect());
        self.r.push(r_col);
        self.columns.push(g);
        self.owner_ids.push(id);
        Ok(true)
    }

    /// Whether `g` is linearly independent of the stored columns, judged by
    /// the projection residual relative to `‖g‖`. A zero vector is never
    /// independent; anything non-zero is independent of an empty basis.
    pub fn is_independent(&self, g: &DenseVector, tol: f64) -> bool {
        let g_norm = g.norm();
        if g_norm == 0.0 {
            return false;
        }
        if self.is_empty() {
            return true;
        }
        let (_, residual) = self.orthogonal_split(g.as_slice());
        dot(&residual, &residual).sqrt() > tol * g_norm
    }

    /// Least-squares projection of `g` onto the span of the columns.
    pub fn project(&self, g: &DenseVector) -> Result<Projection, GeometryError> {
        g.check_dim(self.dim)?;
        if self.is_empty() {
            return Err(GeometryError::EmptyBasis);
        }
        self.check_conditioning()?;
        let (coords, _) = self.orthogonal_split(g.as_slice());
        let coefficients = self.back_substitute(coords);
        let echo_gradient = self.combine(&coefficients);
        let residual_norm = g.distance(&echo_gradient);
        Ok(Projection {
            coefficients,
            echo_gradient,
            residual_norm,
        })
    }

    /// Applies the pseudoinverse `A⁺ = (AᵀA)⁻¹Aᵀ` to `g`.
    pub fn pseudoinverse_apply(&self, g: &DenseVector) -> Result<Vec<f64>, GeometryError> {
        self.project(g).map(|p| p.coefficients)
    }

    /// `A x` for a coefficient vector `x`.
    pub fn combine(&self, coefficients: &[f64]) -> DenseVector {
        debug_assert_eq!(coefficients.len(), self.len());
        let mut out = vec![0.0; self.dim];
        for (column, &c) in self.columns.iter().zip(coefficients) {
            for (o, v) in out.iter_mut().zip(column.iter()) {
                *o += c * v;
            }
        }
        DenseVector::from_vec_unchecked(out)
    }

    // Returns (Qᵀg, g − QQᵀg) using two passes of Gram–Schmidt, enough to
    // keep the residual orthogonal to Q at working precision.
    fn orthogonal_split(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut residual = g.to_vec();
        let mut coords = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (c, q) in coords.iter_mut().zip(&self.q) {
                let proj = dot(q, &residual);
                *c += proj;
                for (res, qi) in residual.iter_mut().zip(q) {
                    *res -= proj * qi;
                }
            }
        }
        (coords, residual)
    }

    fn back_substitute(&self, mut rhs: Vec<f64>) -> Vec<f64> {
        let k = rhs.len();
        for i in (0..k).rev() {
            let tail: f64 = ((i + 1)..k).map(|j| self.r[j][i] * rhs[j]).sum();
            rhs[i] = (rhs[i] - tail) / self.r[i][i];
        }
        rhs
    }

    // Each pivot of R is the distance of a column from the span of the
    // earlier ones, so it must stay above the insertion tolerance.
    fn check_conditioning(&self) -> Result<(), GeometryError> {
        for (i, (col, column)) in self.r.iter().zip(&self.columns).enumerate() {
            let ratio = col[i].abs() / column.norm();
            if !(ratio > INDEPENDENCE_TOL) {
                return Err(GeometryError::SingularGram { ratio });
            }
        }
        Ok(())
    }
}

/// See [`GradientBasis::project`].
pub fn mp_project(basis: &GradientBasis, g: &DenseVector) -> Result<Projection, GeometryError> {
    basis.project(g)
}

/// See [`GradientBasis::is_independent`].
pub fn is_independent(basis: &GradientBasis, g: &DenseVector, tol: f64) -> bool {
    basis.is_independent(g, tol)
}

/// The send check: `‖g* − g‖ ≤ r‖g‖`, with a degenerate (near-zero) echo
/// gradient always failing.
pub fn echo_check(projection: &Projection, g: &DenseVector, r: f64) -> bool {
    let g_norm = g.norm();
    projection.residual_norm <= r * g_norm
        && projection.echo_gradient.norm() > ZERO_ECHO_TOL * g_norm
}

/// `k = ‖g‖ / ‖g*‖`, the scale that restores the local gradient's norm.
pub fn norm_ratio(g: &DenseVector, echo_gradient: &DenseVector) -> Result<f64, GeometryError> {
    let g_norm = g.norm();
    let echo_norm = echo_gradient.norm();
    if echo_norm == 0.0 || echo_norm <= ZERO_ECHO_TOL * g_norm {
        return Err(GeometryError::DegenerateEcho { norm: echo_norm });
    }
    Ok(g_norm / echo_norm)
}

/// Membership in the ball of radius `r/(2+r)·‖∇Q‖` centred at the true gradient.
pub fn in_ball(g: &DenseVector, true_grad: &DenseVector, r: f64) -> bool {
    g.distance(true_grad) <= r / (2.0 + r) * true_grad.norm()
}
