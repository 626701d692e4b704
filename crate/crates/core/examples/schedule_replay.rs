//! Replay a validation-loss curve through reduce-on-plateau and early stopping.
//!
//!     cargo run --example schedule_replay -- 0.9 0.6 0.5 0.52 0.51 0.55 0.53 0.5 0.49

use leafnet::training::{best_epoch, plateau_step, should_stop, stale_epochs, EpochRecord, Monitor, TrainingConfig};

fn main() -> anyhow::Result<()> {
    let losses: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let losses = if losses.is_empty() {
        vec![0.9, 0.6, 0.5, 0.52, 0.51, 0.55, 0.53, 0.58, 0.5, 0.49]
    } else {
        losses
    };
    let config = TrainingConfig::default();
    let mut history = Vec::new();
    let mut lr = config.learning_rate;
    for (i, &loss) in losses.iter().enumerate() {
        history.push(EpochRecord {
            epoch: i + 1,
            val_loss: loss,
            lr,
            ..Default::default()
        });
        let stale = stale_epochs(&history, config.monitor, config.min_delta);
        println!("epoch {:>2}  val_loss {loss:.3}  lr {lr:.0e}  stale {stale}", i + 1);
        if should_stop(&history, &config) {
            println!("early stop after epoch {}", i + 1);
            break;
        }
        let next = plateau_step(&history, &config, lr);
        if next != lr {
            println!("           plateau: lr {lr:.0e} -> {next:.0e}");
            lr = next;
        }
    }
    if let Some(best) = best_epoch(&history, Monitor::ValLoss) {
        println!("restore epoch {}", best + 1);
    }
    Ok(())
}
