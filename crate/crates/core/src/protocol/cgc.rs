use crate::geometry::DenseVector;

#[derive(Debug, Clone, PartialEq)]
pub struct CgcOutput {
    pub gradients: Vec<DenseVector>,
    /// The `(n − f)`-th smallest norm.
    pub threshold: f64,
    /// Indices that were scaled down.
    pub clipped: Vec<usize>,
}

/// Comparative gradient clipping.
///
/// Every gradient whose norm exceeds the `(n − f)`-th smallest norm is
/// rescaled to that norm; the rest pass through untouched. Ties in the sort
/// are broken by index.
///
/// # Panics
///
/// Panics unless `n > 2f`.
pub fn cgc_apply(gradients: &[DenseVector], f: usize) -> CgcOutput {
    let n = gradients.len();
    assert!(n > 2 * f, "CGC filter needs n > 2f (n = {n}, f = {f})");
    let norms: Vec<f64> = gradients.iter().map(DenseVector::norm).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let threshold = norms[order[n - f - 1]];

    let mut clipped = Vec::new();
    let gradients = gradients
        .iter()
        .zip(&norms)
        .enumerate()
        .map(|(i, (g, &norm))| {
            if norm > threshold {
                clipped.push(i);
                g.scaled(threshold / norm)
            } else {
                g.clone()
            }
        })
        .collect();
    CgcOutput {
        gradients,
        threshold,
        clipped,
    }
}

pub fn cgc_filter(gradients: &[DenseVector], f: usize) -> Vec<DenseVector> {
    cgc_apply(gradients, f).gradients
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn clips_largest_to_threshold() {
        let input = vec![v(&[1.0, 0.0]), v(&[0.0, 2.0]), v(&[4.0, 0.0])];
        let out = cgc_apply(&input, 1);
        assert_eq!(out.threshold, 2.0);
        assert_eq!(
            out.gradients,
            vec![v(&[1.0, 0.0]), v(&[0.0, 2.0]), v(&[2.0, 0.0])]
        );
        assert_eq!(out.clipped, vec![2]);
    }

    #[test]
    fn no_faults_means_identity() {
        let input = vec![v(&[1.0, 5.0]), v(&[-3.0, 0.0]), v(&[0.1, 0.1])];
        assert_eq!(cgc_filter(&input, 0), input);
    }

    #[test]
    fn identical_inputs_pass_through() {
        let input = vec![v(&[0.3, -0.7]); 5];
        assert_eq!(cgc_filter(&input, 2), input);
    }

    #[test]
    fn zero_vectors_sort_first() {
        let input = vec![v(&[0.0, 0.0]), v(&[3.0, 0.0]), v(&[0.0, 1.0])];
        let out = cgc_apply(&input, 1);
        assert_eq!(out.threshold, 1.0);
        assert!(out.gradients[0].is_zero());
    }

    #[test]
    #[should_panic(expected = "n > 2f")]
    fn rejects_too_many_faults() {
        cgc_filter(&[v(&[1.0]), v(&[2.0])], 1);
    }
}
