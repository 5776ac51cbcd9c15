use super::EvalError;

fn check(pred: &[f64], actual: &[f64]) -> Result<(), EvalError> {
    if pred.len() != actual.len() {
        return Err(EvalError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::TooShort(0));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    check(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    mse(pred, actual).map(f64::sqrt)
}

/// Coefficient of determination `1 − SS_res / SS_tot`; `None` when the
/// actual values have zero variance.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<Option<f64>, EvalError> {
    check(pred, actual)?;
    if actual.len() < 2 {
        return Err(EvalError::TooShort(actual.len()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}
