use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation slots exist.
    pub val_loss: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: String,
    pub param_count: usize,
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
    /// Scaled-space MSE of the restored checkpoint.
    pub final_train_mse: f64,
    pub final_val_mse: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,seconds")?;
        for e in &self.epochs {
            writeln!(w, "{},{:.12e},{},{}", e.epoch, e.train_loss, opt(e.val_loss), e.seconds.map(|s| format!("{s:.3}")).unwrap_or_default())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log is serializable")
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_row_per_epoch() {
        let log = TrainLog {
            epochs: vec![
                EpochRecord { epoch: 1, train_loss: 0.5, val_loss: Some(0.25), seconds: None },
                EpochRecord { epoch: 2, train_loss: 0.4, val_loss: None, seconds: Some(1.5) },
            ],
            ..Default::default()
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "1,5.000000000000e-1,2.500000000000e-1,");
        assert_eq!(lines[2], "2,4.000000000000e-1,,1.500");
    }
}
