//! Zero-phase Gaussian smoothing used to turn reference-filter output into targets.

use crate::mkf::{run_filter, FilterMode, MkfConfig, StateEstimate};

use super::frame::{SensorFrame, FRAME_DT};
use super::PipelineError;

/// Default smoother width, s.
pub const TARGET_SMOOTHER_SIGMA: f64 = 0.05;

/// Unnormalized half kernel `exp(-k²/2s²)` for k = 0..=ceil(3s), with `s` in samples.
pub fn gaussian_half_kernel(sigma_samples: f64) -> Vec<f64> {
    if sigma_samples <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma_samples - 1e-9).ceil() as usize;
    (0..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma_samples * sigma_samples)).exp())
        .collect()
}

/// Non-causal Gaussian moving average, truncated at 3σ and renormalized where the
/// kernel runs past either end of the sequence.
pub fn gaussian_smooth(values: &[f64], sigma_samples: f64) -> Vec<f64> {
    let half = gaussian_half_kernel(sigma_samples);
    let r = half.len() - 1;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(n.saturating_sub(1));
            let (mut acc, mut norm) = (0.0, 0.0);
            for (j, &v) in values.iter().enumerate().take(hi + 1).skip(lo) {
                let w = half[j.abs_diff(i)];
                acc += w * v;
                norm += w;
            }
            acc / norm
        })
        .collect()
}

pub fn smooth_estimates(states: &[StateEstimate], sigma: f64) -> Vec<StateEstimate> {
    let s = sigma / FRAME_DT;
    let channels: Vec<Vec<f64>> = (0..5)
        .map(|c| {
            let col: Vec<f64> = states.iter().map(|x| x.to_array()[c]).collect();
            gaussian_smooth(&col, s)
        })
        .collect();
    (0..states.len())
        .map(|k| StateEstimate::from_array([0, 1, 2, 3, 4].map(|c| channels[c][k])))
        .collect()
}

/// Reference-mode filter output smoothed with a Gaussian of width `sigma` seconds.
pub fn generate_target(
    frames: &[SensorFrame],
    config: &MkfConfig,
    sigma: f64,
) -> Result<Vec<StateEstimate>, PipelineError> {
    if frames.iter().any(|f| f.ext_velocity.is_none()) {
        return Err(PipelineError::MissingExternalVelocity);
    }
    let states = run_filter(frames, &config.clone().with_mode(FilterMode::Reference))?;
    let means: Vec<StateEstimate> = states.iter().map(|s| s.mean).collect();
    Ok(smooth_estimates(&means, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn constant_sequence_unchanged() {
        let out = gaussian_smooth(&[3.5; 100], 10.0);
        assert!(out.iter().all(|&v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn impulse_response_matches_kernel() {
        let mut x = vec![0.0; 201];
        x[100] = 1.0;
        let y = gaussian_smooth(&x, TARGET_SMOOTHER_SIGMA / FRAME_DT);
        // Σ_{k=-30}^{30} exp(-k²/200) evaluated separately, then exp(-k²/200)/Σ.
        assert_relative_eq!(y[100], 0.039985344576529365, epsilon = 1e-15);
        assert_relative_eq!(y[110], 0.024252337424839322, epsilon = 1e-15);
        assert_relative_eq!(y[80], 0.005411427933578157, epsilon = 1e-15);
        assert_relative_eq!(y[70], 0.00044419705448109045, epsilon = 1e-15);
        assert_eq!(y[69], 0.0);
        assert_eq!(y[131], 0.0);
    }

    #[test]
    fn symmetric_pulse_keeps_peak() {
        let x: Vec<f64> = (0..301).map(|i| (-((i as f64 - 150.0) / 12.0).powi(2)).exp()).collect();
        let y = gaussian_smooth(&x, 10.0);
        let peak = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, 150);
    }

    #[test]
    fn requires_external_velocity() {
        let frames = vec![SensorFrame::default(); 400];
        assert!(matches!(
            generate_target(&frames, &MkfConfig::default(), 0.05),
            Err(PipelineError::MissingExternalVelocity)
        ));
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_everywhere(n in 1usize..120, i in 0usize..120, sigma in 0.5f64..20.0) {
            let i = i % n;
            let mut x = vec![1.0; n];
            // Smoothing the constant 1 returns exactly the weight sum.
            let y = gaussian_smooth(&x, sigma);
            prop_assert!((y[i] - 1.0).abs() < 1e-12);
            x[i] = 5.0;
            let y = gaussian_smooth(&x, sigma);
            prop_assert!(y.iter().all(|&v| (1.0 - 1e-12..=5.0 + 1e-12).contains(&v)));
        }
    }
}
