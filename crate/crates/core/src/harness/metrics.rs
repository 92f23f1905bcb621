use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// One evaluation point. Empty fields mean "not observed in this window".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    /// Completed training episodes so far.
    pub episode: u64,
    pub eval_return_mean: f64,
    pub eval_return_stderr: f64,
    /// Fraction of evaluation episodes that entered the goal region at least once.
    pub eval_goal_fraction: f64,
    /// Mean return of training episodes completed since the previous row.
    pub train_episode_return: Option<f64>,
    pub exploration_reward_mean: Option<f64>,
    /// Mean probability the behavior policy assigned to the exploitation action.
    pub p_q_mean: Option<f64>,
    pub exploit_critic_loss: Option<f64>,
    pub exploit_actor_loss: Option<f64>,
    pub explore_critic_loss: Option<f64>,
    pub explore_actor_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub step: u64,
    pub wall_time: f64,
}

/// Append-only CSV writer that flushes after every row.
pub struct CsvLog {
    writer: csv::Writer<File>,
}

impl CsvLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            writer: csv::Writer::from_path(path)?,
        })
    }

    pub fn append(&mut self, row: &impl Serialize) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

/// Running mean of an optional quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Mean {
    sum: f64,
    count: u64,
}

impl Mean {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn push_opt(&mut self, x: Option<f64>) {
        if let Some(x) = x {
            self.push(x);
        }
    }

    pub fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Sample mean and standard error (`ddof = 1`; 0 for a single value).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stderr_conventions() {
        assert_eq!(mean_and_stderr(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn csv_roundtrip_with_missing_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let rows = vec![
            MetricsRow {
                step: 0,
                episode: 0,
                eval_return_mean: -1200.5,
                eval_return_stderr: 3.25,
                eval_goal_fraction: 0.0,
                train_episode_return: None,
                exploration_reward_mean: None,
                p_q_mean: None,
                exploit_critic_loss: None,
                exploit_actor_loss: None,
                explore_critic_loss: None,
                explore_actor_loss: None,
            },
            MetricsRow {
                step: 1000,
                episode: 5,
                eval_return_mean: 0.1 + 0.2,
                eval_return_stderr: 0.0,
                eval_goal_fraction: 0.5,
                train_episode_return: Some(-900.0),
                exploration_reward_mean: Some(1.5),
                p_q_mean: Some(0.48),
                exploit_critic_loss: Some(2.0),
                exploit_actor_loss: Some(-3.0),
                explore_critic_loss: Some(0.25),
                explore_actor_loss: None,
            },
        ];
        let mut log = CsvLog::create(&path).unwrap();
        for r in &rows {
            log.append(r).unwrap();
        }
        drop(log);
        assert_eq!(read_metrics(&path).unwrap(), rows);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("step,episode,eval_return_mean,eval_return_stderr,eval_goal_fraction,"));
    }

    #[test]
    fn running_mean() {
        let mut m = Mean::default();
        assert_eq!(m.get(), None);
        m.push(1.0);
        m.push_opt(None);
        m.push_opt(Some(3.0));
        assert_eq!(m.get(), Some(2.0));
    }
}
