//! Per-step metric records shared by the trainer and the isolated-dynamics
//! simulation.

use alloc::vec::Vec;

/// Test accuracy at which generalization is considered complete.
pub const GROKKING_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRow {
    pub step: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub theta_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

/// Headline numbers derived from a [`MetricsLog`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub final_step: usize,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    /// First logged step with test accuracy >= [`GROKKING_THRESHOLD`].
    pub grokking_step: Option<usize>,
    /// First logged step with train accuracy 1.
    pub memorization_step: Option<usize>,
}

impl MetricsLog {
    pub fn push(&mut self, row: MetricsRow) {
        debug_assert!(self.rows.last().map_or(true, |r| r.step < row.step));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn first_step_where(&self, pred: impl Fn(&MetricsRow) -> bool) -> Option<usize> {
        self.rows.iter().find(|r| pred(r)).map(|r| r.step)
    }

    pub fn row_at(&self, step: usize) -> Option<&MetricsRow> {
        self.rows
            .binary_search_by_key(&step, |r| r.step)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn summary(&self) -> Option<Summary> {
        let last = self.rows.last()?;
        Some(Summary {
            final_step: last.step,
            final_train_acc: last.train_acc,
            final_test_acc: last.test_acc,
            final_train_loss: last.train_loss,
            final_test_loss: last.test_loss,
            grokking_step: self.first_step_where(|r| r.test_acc >= GROKKING_THRESHOLD),
            memorization_step: self.first_step_where(|r| r.train_acc >= 1.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, test_acc: f64) -> MetricsRow {
        MetricsRow {
            step,
            train_loss: 0.0,
            test_loss: 1.0,
            train_acc: 1.0,
            test_acc,
            theta_norm: 1.0,
        }
    }

    #[test]
    fn onset_is_first_crossing() {
        let mut log = MetricsLog::default();
        for (s, a) in [(0, 0.1), (10, 0.5), (20, 0.99), (30, 0.98), (40, 1.0)] {
            log.push(row(s, a));
        }
        let s = log.summary().unwrap();
        assert_eq!(s.grokking_step, Some(20));
        assert_eq!(s.final_step, 40);
        assert_eq!(log.row_at(30).unwrap().test_acc, 0.98);
        assert!(log.row_at(31).is_none());
    }

    #[test]
    fn empty_log_has_no_summary() {
        assert!(MetricsLog::default().summary().is_none());
    }
}
