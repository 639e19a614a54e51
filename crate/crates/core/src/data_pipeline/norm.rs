use crate::io::{FormatError, KeyValues};

use super::dataset::Dataset;
use super::frame::{FRAME_HEADER, INPUT_DIM};
use super::PipelineError;

pub const OUTPUT_DIM: usize = 5;
pub const OUTPUT_NAMES: [&str; OUTPUT_DIM] = ["vx", "vy", "yawrate", "ax", "ay"];

/// Per-channel mean and standard deviation of network inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub input_mean: [f64; INPUT_DIM],
    pub input_std: [f64; INPUT_DIM],
    pub output_mean: [f64; OUTPUT_DIM],
    pub output_std: [f64; OUTPUT_DIM],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            input_mean: [0.0; INPUT_DIM],
            input_std: [1.0; INPUT_DIM],
            output_mean: [0.0; OUTPUT_DIM],
            output_std: [1.0; OUTPUT_DIM],
        }
    }

    pub fn normalize_input(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|i| (x[i] - self.input_mean[i]) / self.input_std[i])
    }

    pub fn normalize_output(&self, y: &[f64; OUTPUT_DIM]) -> [f64; OUTPUT_DIM] {
        std::array::from_fn(|i| (y[i] - self.output_mean[i]) / self.output_std[i])
    }

    pub fn denormalize_output(&self, y: &[f64]) -> [f64; OUTPUT_DIM] {
        std::array::from_fn(|i| y[i] * self.output_std[i] + self.output_mean[i])
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        kv.set("input_mean", join(&self.input_mean));
        kv.set("input_std", join(&self.input_std));
        kv.set("output_mean", join(&self.output_mean));
        kv.set("output_std", join(&self.output_std));
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self, FormatError> {
        fn list<const N: usize>(kv: &KeyValues, key: &str) -> Result<[f64; N], FormatError> {
            let v: Vec<f64> = kv
                .parse_list(key)?
                .ok_or_else(|| FormatError::MissingKey(key.to_string()))?;
            let bad = || FormatError::BadValue {
                key: key.to_string(),
                value: kv.get(key).unwrap_or_default().to_string(),
            };
            let arr: [f64; N] = v.try_into().map_err(|_| bad())?;
            if arr.iter().any(|x| !x.is_finite()) {
                return Err(bad());
            }
            Ok(arr)
        }
        let s = Self {
            input_mean: list(kv, "input_mean")?,
            input_std: list(kv, "input_std")?,
            output_mean: list(kv, "output_mean")?,
            output_std: list(kv, "output_std")?,
        };
        if s.input_std.iter().chain(&s.output_std).any(|&x| !(x > 0.0)) {
            return Err(FormatError::Invalid("standard deviations must be positive".into()));
        }
        Ok(s)
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Population statistics over every frame and target of the given (training) datasets.
pub fn compute_norm_stats(train: &[&Dataset]) -> Result<NormStats, PipelineError> {
    if train.iter().all(|d| d.frames.is_empty()) {
        return Err(PipelineError::EmptySplit);
    }
    let mut stats = NormStats::identity();
    for c in 0..INPUT_DIM {
        let it = train
            .iter()
            .flat_map(|d| d.frames.iter().map(move |f| f.network_inputs()[c]));
        let (m, s) = mean_std(it);
        if !(s > 0.0) {
            return Err(PipelineError::DegenerateChannel(FRAME_HEADER[c + 1].to_string()));
        }
        stats.input_mean[c] = m;
        stats.input_std[c] = s;
    }
    for c in 0..OUTPUT_DIM {
        if train.iter().any(|d| d.targets.is_none()) {
            return Err(PipelineError::MissingTargets);
        }
        let it = train
            .iter()
            .flat_map(|d| d.targets.iter().flatten().map(move |t| t.to_array()[c]));
        let (m, s) = mean_std(it);
        if !(s > 0.0) {
            return Err(PipelineError::DegenerateChannel(OUTPUT_NAMES[c].to_string()));
        }
        stats.output_mean[c] = m;
        stats.output_std[c] = s;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_pipeline::SensorFrame;
    use crate::mkf::StateEstimate;

    fn dataset(values: &[f64]) -> Dataset {
        let frames = values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let mut f = SensorFrame {
                    t: k as f64 * 0.005,
                    imu1: [v, 1.0 + k as f64, 2.0 * k as f64],
                    imu2: [k as f64; 3],
                    wheel_omega: [k as f64; 4],
                    torque_front: k as f64,
                    torque_rear: k as f64,
                    steering: k as f64,
                    ..SensorFrame::default()
                };
                f.imu2[0] += 0.5;
                f
            })
            .collect::<Vec<_>>();
        let targets = values
            .iter()
            .enumerate()
            .map(|(k, &v)| StateEstimate::new(v, k as f64, 1.0 + k as f64, -v, 3.0 * k as f64))
            .collect();
        Dataset::new(frames, Some(targets))
    }

    #[test]
    fn two_point_channel() {
        let d = dataset(&[-1.0, 1.0]);
        let s = compute_norm_stats(&[&d]).unwrap();
        assert_eq!((s.input_mean[0], s.input_std[0]), (0.0, 1.0));
        assert_eq!((s.output_mean[0], s.output_std[0]), (0.0, 1.0));
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let d = dataset(&[2.0, 2.0, 2.0]);
        assert!(matches!(
            compute_norm_stats(&[&d]),
            Err(PipelineError::DegenerateChannel(c)) if c == "imu1_ax"
        ));
    }

    #[test]
    fn kv_round_trip() {
        let d = dataset(&[-1.0, 0.3, 1.0]);
        let s = compute_norm_stats(&[&d]).unwrap();
        let mut kv = KeyValues::new();
        s.write_kv(&mut kv);
        let back = NormStats::from_kv(&KeyValues::parse(&kv.to_text()).unwrap()).unwrap();
        assert_eq!(back, s);
        let y = [1.0, -2.0, 0.5, 3.0, 4.0];
        let z = s.normalize_output(&y);
        let yy = s.denormalize_output(&z);
        for i in 0..5 {
            assert!((yy[i] - y[i]).abs() < 1e-12);
        }
    }
}
