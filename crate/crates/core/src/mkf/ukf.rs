//! Scaled unscented transform for 2-D measurements of the 5-D state.

use nalgebra::{Matrix2, SMatrix, Vector2};

use super::{checked_covariance, Matrix5, MkfError, Vector5};

const N: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaWeights {
    pub lambda: f64,
    /// Mean weights, centre point first.
    pub mean: [f64; 2 * N + 1],
    pub covariance: [f64; 2 * N + 1],
}

pub fn sigma_weights(alpha: f64, beta: f64, kappa: f64) -> SigmaWeights {
    let n = N as f64;
    let lambda = alpha * alpha * (n + kappa) - n;
    let w = 0.5 / (n + lambda);
    let mut mean = [w; 2 * N + 1];
    let mut covariance = [w; 2 * N + 1];
    mean[0] = lambda / (n + lambda);
    covariance[0] = mean[0] + 1.0 - alpha * alpha + beta;
    SigmaWeights {
        lambda,
        mean,
        covariance,
    }
}

/// Matrix square root `S` with `S Sᵀ = p`; Cholesky when possible, otherwise the
/// symmetric eigendecomposition with negative round-off clipped.
fn matrix_sqrt(p: &Matrix5) -> Matrix5 {
    if let Some(c) = p.cholesky() {
        return c.l();
    }
    let eig = p.symmetric_eigen();
    let mut s = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let root = l.max(0.0).sqrt();
        for i in 0..N {
            s[(i, j)] *= root;
        }
    }
    s
}

/// One unscented update with measurement `z`, noise `r` and model `h`. With `gate` set,
/// a squared Mahalanobis innovation above it returns `GateRejected`.
pub fn unscented_update(
    mean: &Vector5,
    cov: &Matrix5,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
    h: impl Fn(&Vector5) -> Vector2<f64>,
    weights: &SigmaWeights,
    gate: Option<f64>,
    time: f64,
) -> Result<(Vector5, Matrix5), MkfError> {
    let scaled = cov * (N as f64 + weights.lambda);
    let s = matrix_sqrt(&scaled);
    let mut points = [*mean; 2 * N + 1];
    for j in 0..N {
        let col = s.column(j);
        points[1 + j] = mean + col;
        points[1 + N + j] = mean - col;
    }
    let projected: Vec<Vector2<f64>> = points.iter().map(&h).collect();
    let z_hat: Vector2<f64> = projected
        .iter()
        .zip(weights.mean)
        .map(|(y, w)| y * w)
        .sum();
    let mut s_zz = *r;
    let mut c_xz = SMatrix::<f64, 5, 2>::zeros();
    for ((x, y), w) in points.iter().zip(&projected).zip(weights.covariance) {
        let dy = y - z_hat;
        s_zz += dy * dy.transpose() * w;
        c_xz += (x - mean) * dy.transpose() * w;
    }
    let s_zz = (s_zz + s_zz.transpose()) * 0.5;
    let s_inv = s_zz
        .try_inverse()
        .ok_or(MkfError::CovarianceNotPD { time })?;
    let innovation = z - z_hat;
    let d2 = (innovation.transpose() * s_inv * innovation)[0];
    if !(d2 >= 0.0) {
        return Err(MkfError::CovarianceNotPD { time });
    }
    if let Some(threshold) = gate {
        if d2 > threshold {
            return Err(MkfError::GateRejected {
                distance2: d2,
                threshold,
            });
        }
    }
    let k = c_xz * s_inv;
    let new_mean = mean + k * innovation;
    let new_cov = checked_covariance(&(cov - k * s_zz * k.transpose()), time)?;
    Ok((new_mean, new_cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2x5;

    #[test]
    fn weights_sum_to_one() {
        for (a, b, k) in [(0.1, 2.0, 0.0), (1.0, 2.0, 0.0), (0.5, 0.0, 1.0)] {
            let w = sigma_weights(a, b, k);
            assert_relative_eq!(w.mean.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(
                w.covariance.iter().sum::<f64>(),
                2.0 - a * a + b,
                epsilon = 1e-12
            );
        }
    }

    fn spd() -> Matrix5 {
        let a = Matrix5::from_fn(|i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 + if i == j { 1.0 } else { 0.0 });
        a * a.transpose()
    }

    #[test]
    fn affine_measurement_matches_linear_update() {
        let m = Vector5::new(10.0, 0.3, 0.2, 1.0, -0.5);
        let p = spd();
        let h_mat = Matrix2x5::new(1.0, 0.0, -0.6, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
        let offset = Vector2::new(0.1, -0.2);
        let r = Matrix2::new(0.04, 0.01, 0.01, 0.09);
        let z = Vector2::new(9.5, 0.9);
        let w = sigma_weights(0.1, 2.0, 0.0);
        let (um, up) =
            unscented_update(&m, &p, &z, &r, |x| h_mat * x + offset, &w, None, 0.0).unwrap();
        let s = h_mat * p * h_mat.transpose() + r;
        let k = p * h_mat.transpose() * s.try_inverse().unwrap();
        let km = m + k * (z - h_mat * m - offset);
        let kp = p - k * s * k.transpose();
        assert!((um - km).amax() < 1e-9);
        assert!((up - kp).amax() < 1e-9);
    }

    #[test]
    fn degenerate_covariance_is_handled() {
        let mut p = spd();
        for i in 0..5 {
            p[(2, i)] = 0.0;
            p[(i, 2)] = 0.0;
        }
        let s = matrix_sqrt(&p);
        assert!((s * s.transpose() - p).amax() < 1e-12);
    }
}
