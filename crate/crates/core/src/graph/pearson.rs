use super::GraphError;

/// Sample Pearson correlation, accumulated in one pass with running co-moments.
///
/// Returns `Ok(None)` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, GraphError> {
    if x.len() != y.len() {
        return Err(GraphError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(GraphError::TooShort(x.len()));
    }
    let (mut mx, mut my) = (0.0, 0.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (k, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (k + 1) as f64;
        let dx = a - mx;
        let dy = b - my;
        // Symmetric co-moment update, so pearson(x, y) == pearson(y, x) bit for bit.
        let w = (n - 1.0) / n;
        mx += dx / n;
        my += dy / n;
        sxx += dx * dx * w;
        syy += dy * dy * w;
        sxy += dx * dy * w;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}
