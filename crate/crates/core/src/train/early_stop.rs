use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochVerdict {
    /// New best loss; checkpoint it.
    Improved,
    /// No improvement, patience not yet exhausted.
    Wait,
    /// Patience exhausted; stop after this epoch.
    Stop,
}

/// Patience-based early stopping on a loss that must strictly decrease.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best.map(|b| (self.best_epoch, b))
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Result<EpochVerdict> {
        if loss.is_nan() {
            return Err(Error::Numeric(format!("loss is NaN at epoch {epoch}")));
        }
        match self.best {
            Some(b) if loss >= b => {
                self.wait += 1;
                if self.wait >= self.patience {
                    Ok(EpochVerdict::Stop)
                } else {
                    Ok(EpochVerdict::Wait)
                }
            }
            _ => {
                self.best = Some(loss);
                self.best_epoch = epoch;
                self.wait = 0;
                Ok(EpochVerdict::Improved)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64], patience: usize) -> (usize, Option<usize>) {
        let mut es = EarlyStopping::new(patience);
        for (i, &l) in losses.iter().enumerate() {
            if es.observe(i + 1, l).unwrap() == EpochVerdict::Stop {
                return (i + 1, es.best().map(|b| b.0));
            }
        }
        (losses.len(), es.best().map(|b| b.0))
    }

    #[test]
    fn stops_after_patience_without_improvement() {
        let losses = [0.50, 0.40, 0.41, 0.42, 0.43, 0.44, 0.45, 0.30];
        assert_eq!(run(&losses, 5), (7, Some(2)));
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let losses = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        assert_eq!(run(&losses, 5), (6, Some(1)));
    }

    #[test]
    fn improvement_resets_the_counter() {
        let losses = [0.5, 0.6, 0.6, 0.6, 0.6, 0.4, 0.6, 0.6, 0.6, 0.6];
        assert_eq!(run(&losses, 5), (10, Some(6)));
    }

    #[test]
    fn plateau_after_second_epoch() {
        let losses = [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        assert_eq!(run(&losses, 5), (7, Some(2)));
    }

    #[test]
    fn decreasing_losses_never_stop() {
        let losses: Vec<f64> = (0..100).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(run(&losses, 5), (100, Some(100)));
    }

    #[test]
    fn counter_resets_on_new_best() {
        let mut es = EarlyStopping::new(5);
        assert_eq!(es.observe(1, 1.0).unwrap(), EpochVerdict::Improved);
        assert_eq!(es.observe(2, 1.1).unwrap(), EpochVerdict::Wait);
        assert_eq!(es.observe(3, 0.8).unwrap(), EpochVerdict::Improved);
        assert_eq!(es.best(), Some((3, 0.8)));
    }

    #[test]
    fn nan_is_an_error() {
        let mut es = EarlyStopping::new(5);
        es.observe(1, 0.3).unwrap();
        assert!(matches!(es.observe(2, f64::NAN), Err(Error::Numeric(_))));
    }
}
