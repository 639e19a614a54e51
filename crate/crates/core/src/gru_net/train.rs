use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::masked_rmse_loss_grad;
use super::network::{Gradients, GruNetwork};
use super::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use super::NetError;
use crate::data_pipeline::{Dataset, NormStats, INPUT_DIM, OUTPUT_DIM};
use crate::io::{read_table, write_table, FormatError, KeyValues, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Inference-time warm-up, samples.
    pub warmup_steps: usize,
    /// Leading steps of each training window excluded from the loss.
    pub input_steps: usize,
    /// Trailing steps of each training window that are scored.
    pub output_steps: usize,
    pub max_epochs: usize,
    /// Epochs without a strictly lower validation loss before stopping.
    pub patience: usize,
    /// Offset between consecutive training windows, samples.
    pub window_stride: usize,
    pub seed: u64,
    /// Wall-clock limit in seconds (0 = none). Runs stopped by it are not reproducible.
    pub max_train_seconds: f64,
    /// Per-epoch multiplicative learning-rate decay; 1 keeps the rate constant.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(1.0),
            batch_size: 32,
            warmup_steps: 200,
            input_steps: 300,
            output_steps: 200,
            max_epochs: 2000,
            patience: 50,
            window_stride: 100,
            seed: 0,
            max_train_seconds: 0.0,
            lr_decay: 1.0,
        }
    }
}

/// Hard ceiling on `max_epochs`.
pub const MAX_EPOCHS_CEILING: usize = 10_000;

impl TrainConfig {
    pub fn window_len(&self) -> usize {
        self.input_steps + self.output_steps
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam parameters out of range");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        if self.output_steps == 0 || self.batch_size == 0 || self.window_stride == 0 {
            return bad("output_steps, batch_size and window_stride must be at least 1");
        }
        if self.warmup_steps > self.window_len() {
            return bad("warmup_steps exceeds the sequence length");
        }
        if self.max_epochs == 0 || self.max_epochs > MAX_EPOCHS_CEILING {
            return bad("max_epochs must lie in 1..=10000");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.max_train_seconds >= 0.0) {
            return bad("max_train_seconds must be >= 0");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("learning_rate", self.learning_rate);
        kv.set("beta1", self.beta1);
        kv.set("beta2", self.beta2);
        kv.set("epsilon", self.epsilon);
        kv.set("clip_norm", self.clip_norm.unwrap_or(0.0));
        kv.set("batch_size", self.batch_size);
        kv.set("warmup_steps", self.warmup_steps);
        kv.set("input_steps", self.input_steps);
        kv.set("output_steps", self.output_steps);
        kv.set("max_epochs", self.max_epochs);
        kv.set("patience", self.patience);
        kv.set("window_stride", self.window_stride);
        kv.set("seed", self.seed);
        kv.set("max_train_seconds", self.max_train_seconds);
        kv.set("lr_decay", self.lr_decay);
        kv
    }

    /// Absent keys keep their defaults; `clip_norm=0` disables clipping.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, NetError> {
        let d = Self::default();
        let clip: f64 = kv.parse_or("clip_norm", d.clip_norm.unwrap_or(0.0))?;
        let c = Self {
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            beta1: kv.parse_or("beta1", d.beta1)?,
            beta2: kv.parse_or("beta2", d.beta2)?,
            epsilon: kv.parse_or("epsilon", d.epsilon)?,
            clip_norm: (clip != 0.0).then_some(clip),
            batch_size: kv.parse_or("batch_size", d.batch_size)?,
            warmup_steps: kv.parse_or("warmup_steps", d.warmup_steps)?,
            input_steps: kv.parse_or("input_steps", d.input_steps)?,
            output_steps: kv.parse_or("output_steps", d.output_steps)?,
            max_epochs: kv.parse_or("max_epochs", d.max_epochs)?,
            patience: kv.parse_or("patience", d.patience)?,
            window_stride: kv.parse_or("window_stride", d.window_stride)?,
            seed: kv.parse_or("seed", d.seed)?,
            max_train_seconds: kv.parse_or("max_train_seconds", d.max_train_seconds)?,
            lr_decay: kv.parse_or("lr_decay", d.lr_decay)?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// One normalized input/target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    /// `[T, 13]`
    pub inputs: Array2<f64>,
    /// `[T, 5]`
    pub targets: Array2<f64>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

pub fn normalize_inputs(ds: &Dataset, norm: &NormStats) -> Array2<f64> {
    let mut x = Array2::zeros((ds.frames.len(), INPUT_DIM));
    for (k, f) in ds.frames.iter().enumerate() {
        x.row_mut(k)
            .assign(&ndarray::ArrayView1::from(&norm.normalize_input(&f.network_inputs())));
    }
    x
}

/// Normalized inputs and targets; datasets without targets are an error.
pub fn prepare_sequence(ds: &Dataset, norm: &NormStats) -> Result<Sequence, NetError> {
    let targets = ds.targets.as_ref().ok_or(NetError::MissingTargets)?;
    let mut y = Array2::zeros((targets.len(), OUTPUT_DIM));
    for (k, t) in targets.iter().enumerate() {
        y.row_mut(k)
            .assign(&ndarray::ArrayView1::from(&norm.normalize_output(&t.to_array())));
    }
    Ok(Sequence {
        inputs: normalize_inputs(ds, norm),
        targets: y,
    })
}

/// (sequence index, start) of every full window of `len` samples taken every `stride`.
pub fn extract_windows(seqs: &[Sequence], len: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        if s.len() < len {
            continue;
        }
        let mut start = 0;
        while start + len <= s.len() {
            out.push((i, start));
            start += stride;
        }
    }
    out
}

/// Stacks windows into `[T, B, 13]` inputs and `[T, B, 5]` targets.
pub fn assemble_batch(seqs: &[Sequence], windows: &[(usize, usize)], len: usize) -> (Array3<f64>, Array3<f64>) {
    let b = windows.len();
    let mut x = Array3::zeros((len, b, INPUT_DIM));
    let mut y = Array3::zeros((len, b, OUTPUT_DIM));
    for (j, &(i, start)) in windows.iter().enumerate() {
        x.slice_mut(s![.., j, ..])
            .assign(&seqs[i].inputs.slice(s![start..start + len, ..]));
        y.slice_mut(s![.., j, ..])
            .assign(&seqs[i].targets.slice(s![start..start + len, ..]));
    }
    (x, y)
}

/// Masked loss of a batch and its exact gradients by backpropagation through time.
pub fn bptt_gradients(
    net: &GruNetwork,
    inputs: &Array3<f64>,
    targets: &Array3<f64>,
    warmup: usize,
    train: bool,
    dropout_seed: u64,
) -> (f64, Gradients) {
    let cache = net.forward_cached(inputs.view(), None, train, dropout_seed);
    let (loss, d_out) = masked_rmse_loss_grad(cache.output_3d(), targets.view(), warmup);
    (loss, net.backward(&cache, d_out.view()))
}

/// Eval-mode loss averaged over batches, weighted by batch size.
pub fn evaluate_loss(net: &GruNetwork, seqs: &[Sequence], windows: &[(usize, usize)], cfg: &TrainConfig) -> f64 {
    let len = cfg.window_len();
    let mut total = 0.0;
    for chunk in windows.chunks(cfg.batch_size) {
        let (x, y) = assemble_batch(seqs, chunk, len);
        let (out, _) = net.forward_sequence(x.view(), None, false, 0);
        total += super::loss::masked_rmse_loss(out.view(), y.view(), cfg.input_steps) * chunk.len() as f64;
    }
    total / windows.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

pub const HISTORY_HEADER: [&str; 3] = ["epoch", "train_loss", "val_loss"];

impl TrainingHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&HISTORY_HEADER);
        for r in &self.records {
            t.rows.push(vec![r.epoch as f64, r.train_loss, r.val_loss]);
        }
        t
    }

    pub fn from_table(table: &Table) -> Result<Self, FormatError> {
        table.expect_exact(&HISTORY_HEADER)?;
        let mut records = Vec::with_capacity(table.rows.len());
        for (i, r) in table.rows.iter().enumerate() {
            if r[0] < 0.0 || r[0].fract() != 0.0 {
                return Err(FormatError::BadField {
                    row: i + 1,
                    column: "epoch".into(),
                    reason: format!("{} is not an epoch number", r[0]),
                });
            }
            records.push(EpochRecord {
                epoch: r[0] as usize,
                train_loss: r[1],
                val_loss: r[2],
            });
        }
        let best_epoch = records
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .map_or(0, |r| r.epoch);
        Ok(Self {
            records,
            best_epoch,
            stopped_early: false,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        let f = std::fs::File::create(path)?;
        write_table(std::io::BufWriter::new(f), &self.to_table())
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let f = std::fs::File::open(path)?;
        Self::from_table(&read_table(std::io::BufReader::new(f))?)
    }
}

fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 24) ^ batch as u64
}

/// Mini-batch BPTT with Adam, optional global-norm clipping and early stopping on the
/// validation loss. Returns the parameters of the best validation epoch.
pub fn train(
    net: &GruNetwork,
    train_seqs: &[Sequence],
    val_seqs: &[Sequence],
    cfg: &TrainConfig,
) -> Result<(GruNetwork, TrainingHistory), NetError> {
    cfg.validate()?;
    net.validate()?;
    let len = cfg.window_len();
    let mut train_windows = extract_windows(train_seqs, len, cfg.window_stride);
    let val_windows = extract_windows(val_seqs, len, cfg.window_stride);
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(NetError::NoWindows(len));
    }
    let started = Instant::now();
    let mut adam = cfg.adam();
    let mut state = AdamState::new(net.param_count());
    let mut current = net.clone();
    let mut best = net.clone();
    let mut best_val = f64::INFINITY;
    let mut history = TrainingHistory::default();
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        train_windows.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in train_windows.chunks(cfg.batch_size).enumerate() {
            let (x, y) = assemble_batch(train_seqs, chunk, len);
            let (loss, mut grads) =
                bptt_gradients(&current, &x, &y, cfg.input_steps, true, dropout_seed(cfg.seed, epoch, b));
            if !loss.is_finite() {
                return Err(NetError::Diverged { epoch });
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_step(&mut current, &grads, &mut state, &adam);
            loss_sum += loss * chunk.len() as f64;
        }
        adam.learning_rate *= cfg.lr_decay;
        let train_loss = loss_sum / train_windows.len() as f64;
        let val_loss = evaluate_loss(&current, val_seqs, &val_windows, cfg);
        if !val_loss.is_finite() {
            return Err(NetError::Diverged { epoch });
        }
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = current.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
        if cfg.max_train_seconds > 0.0 && started.elapsed().as_secs_f64() > cfg.max_train_seconds {
            break;
        }
    }
    Ok((best, history))
}

/// Normalization, sequence preparation and training in one call.
pub fn train_on_datasets(
    net: &GruNetwork,
    train_sets: &[&Dataset],
    val_sets: &[&Dataset],
    norm: &NormStats,
    cfg: &TrainConfig,
) -> Result<(GruNetwork, TrainingHistory), NetError> {
    let tr = train_sets
        .iter()
        .map(|d| prepare_sequence(d, norm))
        .collect::<Result<Vec<_>, _>>()?;
    let va = val_sets
        .iter()
        .map(|d| prepare_sequence(d, norm))
        .collect::<Result<Vec<_>, _>>()?;
    train(net, &tr, &va, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_sequences(n: usize, len: usize, seed: u64, target: [f64; 5]) -> Vec<Sequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Sequence {
                inputs: Array2::from_shape_simple_fn((len, INPUT_DIM), || rng.random_range(-1.0..1.0)),
                targets: Array2::from_shape_fn((len, OUTPUT_DIM), |(_, c)| target[c]),
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 4,
            warmup_steps: 5,
            input_steps: 5,
            output_steps: 10,
            window_stride: 15,
            max_epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let target = [0.5, -1.0, 0.25, 2.0, -0.3];
        let tr = toy_sequences(8, 60, 1, target);
        let va = toy_sequences(2, 30, 2, target);
        let net = GruNetwork::new(INPUT_DIM, &[4], OUTPUT_DIM, 0.0, 0.01, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.003,
            ..small_cfg()
        };
        let (_, hist) = train(&net, &tr, &va, &cfg).unwrap();
        assert!(hist.records.len() <= 200);
        assert!(hist.best_val_loss() < 1e-3, "best val {}", hist.best_val_loss());
    }

    #[test]
    fn same_seed_same_history_and_best_params() {
        let target = [0.1, 0.2, 0.3, 0.4, 0.5];
        let tr = toy_sequences(3, 45, 4, target);
        let va = toy_sequences(2, 30, 5, target);
        let net = GruNetwork::new(INPUT_DIM, &[3], OUTPUT_DIM, 0.075, 0.01, 6).unwrap();
        let cfg = TrainConfig {
            max_epochs: 15,
            patience: 4,
            ..small_cfg()
        };
        let (a, ha) = train(&net, &tr, &va, &cfg).unwrap();
        let (b, hb) = train(&net, &tr, &va, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        // The returned parameters reproduce the best recorded validation loss exactly,
        // with dropout inactive whatever the configured fraction.
        let windows = extract_windows(&va, cfg.window_len(), cfg.window_stride);
        assert_eq!(evaluate_loss(&a, &va, &windows, &cfg), ha.best_val_loss());
        let mut no_drop = a.clone();
        no_drop.dropout = 0.0;
        assert_eq!(evaluate_loss(&no_drop, &va, &windows, &cfg), ha.best_val_loss());
    }

    #[test]
    fn vanishing_decay_freezes_parameters_after_first_epoch() {
        let tr = toy_sequences(3, 45, 8, [0.3; 5]);
        let va = toy_sequences(2, 30, 9, [0.3; 5]);
        let net = GruNetwork::new(INPUT_DIM, &[3], OUTPUT_DIM, 0.0, 0.01, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            lr_decay: 1e-12,
            ..small_cfg()
        };
        let (_, h) = train(&net, &tr, &va, &cfg).unwrap();
        let v: Vec<f64> = h.records.iter().map(|r| r.val_loss).collect();
        assert!((v[1] - v[0]).abs() < 1e-9 && (v[2] - v[1]).abs() < 1e-9, "{v:?}");
        let (_, steady) = train(&net, &tr, &va, &TrainConfig { lr_decay: 1.0, ..cfg }).unwrap();
        assert!((steady.records[2].val_loss - v[2]).abs() > 1e-6);
    }

    #[test]
    fn config_and_history_text_round_trip() {
        let cfg = TrainConfig {
            clip_norm: None,
            seed: 7,
            lr_decay: 0.95,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        assert!(TrainConfig::from_kv(&KeyValues::parse("learning_rate=0").unwrap()).is_err());
        assert!(TrainConfig::from_kv(&KeyValues::parse("max_epochs=20000").unwrap()).is_err());
        assert!(TrainConfig::from_kv(&KeyValues::parse("warmup_steps=900").unwrap()).is_err());
        assert!(TrainConfig::from_kv(&KeyValues::parse("lr_decay=0").unwrap()).is_err());
        assert!(TrainConfig::from_kv(&KeyValues::parse("lr_decay=1.5").unwrap()).is_err());
        let h = TrainingHistory {
            records: vec![
                EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.4 },
                EpochRecord { epoch: 2, train_loss: 0.3, val_loss: 0.35 },
            ],
            best_epoch: 2,
            stopped_early: false,
        };
        assert_eq!(TrainingHistory::from_table(&h.to_table()).unwrap(), h);
    }

    #[test]
    fn windows_respect_length_and_stride() {
        let seqs = toy_sequences(2, 25, 0, [0.0; 5]);
        let mut short = toy_sequences(1, 5, 0, [0.0; 5]);
        short.extend(seqs);
        assert_eq!(extract_windows(&short, 10, 7), vec![(1, 0), (1, 7), (1, 14), (2, 0), (2, 7), (2, 14)]);
    }
}
