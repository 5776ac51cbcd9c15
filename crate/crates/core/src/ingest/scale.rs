use serde::{Deserialize, Serialize};

use super::demand::DemandTensor;
use super::features::FeatureTensor;
use super::{IngestError, Result};

/// Chronological split: slots before `floor(train_fraction · T)` train, the
/// rest test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

impl SplitSpec {
    pub fn cut(&self, n_slots: usize) -> Result<usize> {
        let cut = (self.train_fraction * n_slots as f64).floor() as usize;
        let cut = cut.min(n_slots);
        if n_slots < 2 || cut == 0 || cut == n_slots {
            return Err(IngestError::DegenerateSplit { train: cut, test: n_slots - cut });
        }
        Ok(cut)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub features: FeatureTensor,
    pub targets: DemandTensor,
}

pub fn split(features: &FeatureTensor, targets: &DemandTensor, spec: &SplitSpec) -> Result<(Subset, Subset)> {
    if features.n_slots() != targets.n_slots() || features.n_stations() != targets.n_stations() {
        return Err(IngestError::ShapeMismatch("features and targets cover different slots/stations".into()));
    }
    let t = features.n_slots();
    let cut = spec.cut(t)?;
    Ok((
        Subset { features: features.slice_slots(0, cut), targets: targets.slice_slots(0, cut) },
        Subset { features: features.slice_slots(cut, t), targets: targets.slice_slots(cut, t) },
    ))
}

/// Per-column min-max scaler. Constant columns map to 0; values outside the
/// fitted range extrapolate linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits over rows of width `width`.
    pub fn fit_rows<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            for (j, v) in row.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        for j in 0..width {
            if !min[j].is_finite() {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        Self { min, max }
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn transform_value(&self, col: usize, v: f64) -> f64 {
        let range = self.max[col] - self.min[col];
        if range > 0.0 {
            (v - self.min[col]) / range
        } else {
            0.0
        }
    }

    #[inline]
    pub fn inverse_value(&self, col: usize, v: f64) -> f64 {
        let range = self.max[col] - self.min[col];
        if range > 0.0 {
            v * range + self.min[col]
        } else {
            self.min[col]
        }
    }

    pub fn transform(&self, features: &FeatureTensor) -> FeatureTensor {
        features.map_values(|c, v| self.transform_value(c, v))
    }

    pub fn inverse_transform(&self, features: &FeatureTensor) -> FeatureTensor {
        features.map_values(|c, v| self.inverse_value(c, v))
    }
}

/// Fits feature scaling on the training slots only.
pub fn fit_scaler(features: &FeatureTensor, split: &SplitSpec) -> Result<MinMaxScaler> {
    let cut = split.cut(features.n_slots())?;
    let nf = features.n_features();
    let rows = features.values()[..cut * features.n_stations() * nf].chunks_exact(nf);
    Ok(MinMaxScaler::fit_rows(nf, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_timestamp, FeatureLayout, SlotRange};
    use proptest::prelude::*;

    fn range(len: usize) -> SlotRange {
        SlotRange::new(parse_timestamp("2019-01-01 00:00:00").unwrap(), len).unwrap()
    }

    fn column(values: &[f64]) -> MinMaxScaler {
        MinMaxScaler::fit_rows(1, values.iter().map(std::slice::from_ref))
    }

    #[test]
    fn maps_training_range_to_unit_interval() {
        let s = column(&[2.0, 4.0, 6.0]);
        assert_eq!((s.min[0], s.max[0]), (2.0, 6.0));
        assert_eq!(s.transform_value(0, 4.0), 0.5);
        assert_eq!(s.transform_value(0, 8.0), 1.5);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        assert_eq!(column(&[5.0, 5.0]).transform_value(0, 5.0), 0.0);
    }

    #[test]
    fn split_boundaries() {
        assert_eq!(SplitSpec::default().cut(10).unwrap(), 7);
        assert!(matches!(SplitSpec::default().cut(1), Err(IngestError::DegenerateSplit { .. })));
        assert_eq!(SplitSpec::default().cut(8768).unwrap(), 6137);
    }

    #[test]
    fn fit_scaler_ignores_test_slots() {
        let layout = FeatureLayout::default();
        let mut values = vec![0.0; 10 * 8];
        for t in 0..10 {
            values[t * 8] = if t < 7 { t as f64 } else { 1000.0 };
        }
        let f = FeatureTensor::from_values(layout, range(10), vec!["a".into()], values).unwrap();
        let s = fit_scaler(&f, &SplitSpec::default()).unwrap();
        assert_eq!(s.max[0], 6.0);
        let (train, test) = split(&f, &DemandTensor::zeros(range(10), vec!["a".into()]), &SplitSpec::default()).unwrap();
        assert_eq!((train.features.n_slots(), test.features.n_slots()), (7, 3));
        assert_eq!(test.features.slots().start, range(10).time_of(7));
    }

    proptest! {
        #[test]
        fn inverse_undoes_transform(xs in prop::collection::vec(-1e6f64..1e6, 2..40), probe in -1e7f64..1e7) {
            let s = column(&xs);
            prop_assume!(s.max[0] > s.min[0]);
            let back = s.inverse_value(0, s.transform_value(0, probe));
            prop_assert!((back - probe).abs() <= 1e-9 * probe.abs().max(1.0));
        }

        #[test]
        fn split_is_disjoint_and_exhaustive(t in 2usize..5000, frac in 0.05f64..0.95) {
            let spec = SplitSpec { train_fraction: frac };
            if let Ok(cut) = spec.cut(t) {
                prop_assert!(cut > 0 && cut < t);
                prop_assert_eq!(cut, (frac * t as f64).floor() as usize);
            }
        }
    }
}
