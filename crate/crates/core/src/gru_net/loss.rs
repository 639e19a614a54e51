use ndarray::{s, Array3, ArrayView3, Axis};

/// Mean over channels of the per-channel RMSE over time steps `t ≥ warmup`, pooled over the
/// batch. Shapes are `[T, B, C]`.
pub fn masked_rmse_loss(pred: ArrayView3<f64>, target: ArrayView3<f64>, warmup: usize) -> f64 {
    masked_rmse_loss_grad(pred, target, warmup).0
}

/// Loss and its gradient with respect to `pred`. A channel whose error is exactly zero
/// contributes a zero gradient.
pub fn masked_rmse_loss_grad(
    pred: ArrayView3<f64>,
    target: ArrayView3<f64>,
    warmup: usize,
) -> (f64, Array3<f64>) {
    assert_eq!(pred.dim(), target.dim(), "prediction and target shapes");
    let (t_len, batch, channels) = pred.dim();
    assert!(warmup < t_len, "warm-up must leave at least one step");
    let n = ((t_len - warmup) * batch) as f64;
    let err = &pred.slice(s![warmup.., .., ..]) - &target.slice(s![warmup.., .., ..]);
    let rmse: Vec<f64> = (0..channels)
        .map(|c| (err.index_axis(Axis(2), c).mapv(|e| e * e).sum() / n).sqrt())
        .collect();
    let loss = rmse.iter().sum::<f64>() / channels as f64;
    let mut grad = Array3::zeros(pred.dim());
    for c in 0..channels {
        if rmse[c] > 0.0 {
            let scale = 1.0 / (channels as f64 * n * rmse[c]);
            grad.slice_mut(s![warmup.., .., c])
                .assign(&err.index_axis(Axis(2), c).mapv(|e| e * scale));
        }
    }
    (loss, grad)
}
