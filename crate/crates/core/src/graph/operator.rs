use super::adjacency::AdjacencyMatrix;
use super::GraphError;

/// Symmetric-normalized operator `D^{-1/2} Ã D^{-1/2}` applied to node
/// features by every graph convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    n: usize,
    values: Vec<f64>,
}

impl PropagationOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self { n, values }
    }

    /// Wraps an arbitrary finite square matrix, e.g. raw adjacency weights for
    /// the unnormalized message-passing variant.
    pub fn from_raw(n: usize, values: Vec<f64>) -> Result<Self, GraphError> {
        if values.len() != n * n {
            return Err(GraphError::InvalidMatrix(format!("{} values for n = {n}", values.len())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::NonFiniteEntry(k / n, k % n));
        }
        Ok(Self { n, values })
    }
}

/// Renormalized propagation operator.
///
/// The adjacency already carries its self-loops (unit diagonal), so it is used
/// as `Ã` directly. Degrees sum absolute weights, which coincides with the
/// plain row sum for non-negative graphs and keeps the spectrum inside
/// `[-1, 1]` when negative correlations are retained.
pub fn propagation_operator(adj: &AdjacencyMatrix) -> Result<PropagationOperator, GraphError> {
    let n = adj.n();
    let a = adj.values();
    if let Some(k) = a.iter().position(|v| !v.is_finite()) {
        return Err(GraphError::NonFiniteEntry(k / n, k % n));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = inv_sqrt[i] * a[i * n + j] * inv_sqrt[j];
        }
    }
    // Products above are commutative in i/j, so symmetry is exact.
    Ok(PropagationOperator { n, values })
}

/// Symmetric normalized Laplacian `I − D^{-1/2} A D^{-1/2}` with `D_ii = Σ_j A_ij`.
pub fn laplacian(adj: &AdjacencyMatrix) -> Result<Vec<f64>, GraphError> {
    let n = adj.n();
    let a = adj.values();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = a[i * n..(i + 1) * n].iter().sum();
        if d <= 0.0 {
            return Err(GraphError::ZeroDegreeNode(i));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            l[i * n + j] = delta - inv_sqrt[i] * a[i * n + j] * inv_sqrt[j];
        }
    }
    Ok(l)
}
