//! Reduce-on-plateau and early stopping, both derived by replaying the
//! monitored metric over the epoch history.

use super::config::{Monitor, TrainingConfig};
use super::history::EpochRecord;

pub fn monitored(record: &EpochRecord, monitor: Monitor) -> f64 {
    match monitor {
        Monitor::ValLoss => record.val_loss,
        Monitor::ValAccuracy => record.val_acc,
    }
}

/// Consecutive epochs, counting back from the last, without an improvement on
/// the best value seen so far. The first epoch always improves.
pub fn stale_epochs(history: &[EpochRecord], monitor: Monitor, min_delta: f64) -> usize {
    let mut best: Option<f64> = None;
    let mut wait = 0;
    for rec in history {
        let v = monitored(rec, monitor);
        match best {
            Some(b) if !monitor.improves(v, b, min_delta) => wait += 1,
            _ => {
                best = Some(v);
                wait = 0;
            }
        }
    }
    wait
}

/// True once the stale counter reaches `early_stop_patience`.
pub fn should_stop(history: &[EpochRecord], config: &TrainingConfig) -> bool {
    !history.is_empty() && stale_epochs(history, config.monitor, config.min_delta) >= config.early_stop_patience
}

/// Learning rate for the next epoch. A decay fires when the plateau counter
/// reaches `plateau_patience` at the latest epoch; the counter restarts after
/// each decay, so a second decay needs another full run of stale epochs.
pub fn plateau_step(history: &[EpochRecord], config: &TrainingConfig, current_lr: f64) -> f64 {
    let mut best: Option<f64> = None;
    let mut wait = 0;
    let mut fired = false;
    for rec in history {
        let v = monitored(rec, config.monitor);
        match best {
            Some(b) if !config.monitor.improves(v, b, config.min_delta) => wait += 1,
            _ => {
                best = Some(v);
                wait = 0;
            }
        }
        fired = wait >= config.plateau_patience;
        if fired {
            wait = 0;
        }
    }
    if fired {
        current_lr * config.plateau_factor
    } else {
        current_lr
    }
}

/// Index of the epoch with the best monitored value (earliest on ties).
pub fn best_epoch(history: &[EpochRecord], monitor: Monitor) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, rec) in history.iter().enumerate() {
        let v = monitored(rec, monitor);
        match best {
            Some((_, b)) if !monitor.improves(v, b, 0.0) => {}
            _ if v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
