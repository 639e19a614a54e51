//! One-factor-at-a-time sweep over the hyperparameter ranges, starting from the chosen
//! configuration (1 layer of 64 units, 300 + 200 steps, leaky-ReLU, lr 5e-4, clipping,
//! dropout 0.075).

use super::network::{GruNetwork, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE};
use super::train::{train, Sequence, TrainConfig};
use super::NetError;
use crate::data_pipeline::{INPUT_DIM, OUTPUT_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub layers: usize,
    pub units: usize,
    pub input_steps: usize,
    pub output_steps: usize,
    /// 0 gives a plain ReLU.
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub clip: bool,
    pub dropout: f64,
    pub epochs: usize,
}

impl Default for GridPoint {
    fn default() -> Self {
        Self {
            layers: 1,
            units: 64,
            input_steps: 300,
            output_steps: 200,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            learning_rate: 5e-4,
            clip: true,
            dropout: DEFAULT_DROPOUT,
            epochs: 10_000,
        }
    }
}

pub fn hyperparameter_grid() -> Vec<GridPoint> {
    let d = GridPoint::default();
    let mut out = vec![d.clone()];
    let mut vary = |f: &dyn Fn(&mut GridPoint)| {
        let mut p = d.clone();
        f(&mut p);
        if !out.contains(&p) {
            out.push(p);
        }
    };
    for layers in [2, 3] {
        vary(&|p| p.layers = layers);
    }
    for units in [16, 32, 128, 256] {
        vary(&|p| p.units = units);
    }
    for input_steps in [20, 100, 500] {
        vary(&|p| p.input_steps = input_steps);
    }
    for output_steps in [100, 500, 1000] {
        vary(&|p| p.output_steps = output_steps);
    }
    vary(&|p| p.leaky_slope = 0.0);
    for lr in [1e-4, 1e-3, 5e-3, 1e-2] {
        vary(&|p| p.learning_rate = lr);
    }
    vary(&|p| p.clip = false);
    for dropout in [0.0, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25] {
        vary(&|p| p.dropout = dropout);
    }
    vary(&|p| p.epochs = 1000);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub point: GridPoint,
    pub best_val_loss: f64,
    pub epochs_run: usize,
}

/// Trains every point from `base` (batch size, stride, patience and seed are taken from
/// it; `max_epochs` is capped by `base.max_epochs`).
pub fn run_grid(
    points: &[GridPoint],
    train_seqs: &[Sequence],
    val_seqs: &[Sequence],
    base: &TrainConfig,
) -> Result<Vec<GridResult>, NetError> {
    points
        .iter()
        .map(|p| {
            let cfg = TrainConfig {
                input_steps: p.input_steps,
                output_steps: p.output_steps,
                warmup_steps: base.warmup_steps.min(p.input_steps + p.output_steps),
                learning_rate: p.learning_rate,
                clip_norm: if p.clip { base.clip_norm.or(Some(1.0)) } else { None },
                max_epochs: p.epochs.min(base.max_epochs),
                ..base.clone()
            };
            let net = GruNetwork::new(INPUT_DIM, &vec![p.units; p.layers], OUTPUT_DIM, p.dropout, p.leaky_slope, base.seed)?;
            let (_, h) = train(&net, train_seqs, val_seqs, &cfg)?;
            Ok(GridResult {
                point: p.clone(),
                best_val_loss: h.best_val_loss(),
                epochs_run: h.records.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn grid_covers_every_range_once() {
        let g = hyperparameter_grid();
        assert_eq!(g[0], GridPoint::default());
        for (i, a) in g.iter().enumerate() {
            assert!(g[i + 1..].iter().all(|b| b != a));
        }
        assert!(g.iter().any(|p| p.layers == 3));
        assert!(g.iter().any(|p| p.dropout == 0.25));
        assert!(g.iter().any(|p| !p.clip));
        assert!(g.iter().any(|p| p.leaky_slope == 0.0));
    }

    #[test]
    fn runs_small_points() {
        let seq = Sequence {
            inputs: Array2::from_shape_fn((40, INPUT_DIM), |(t, i)| ((t * i) as f64 * 0.1).sin()),
            targets: Array2::from_elem((40, OUTPUT_DIM), 0.5),
        };
        let base = TrainConfig {
            batch_size: 2,
            window_stride: 10,
            max_epochs: 2,
            warmup_steps: 5,
            ..TrainConfig::default()
        };
        let pts = [
            GridPoint { units: 2, input_steps: 5, output_steps: 10, ..GridPoint::default() },
            GridPoint { units: 3, layers: 2, input_steps: 5, output_steps: 10, clip: false, ..GridPoint::default() },
        ];
        let res = run_grid(&pts, &[seq.clone()], &[seq], &base).unwrap();
        assert_eq!(res.len(), 2);
        assert!(res.iter().all(|r| r.epochs_run == 2 && r.best_val_loss.is_finite()));
    }
}
