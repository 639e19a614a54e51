//! Backpropagation through time checked against central finite differences.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::masked_rmse_loss;
use super::network::GruNetwork;
use super::train::bptt_gradients;

struct Case {
    hidden: Vec<usize>,
    t_len: usize,
    batch: usize,
    warmup: usize,
    dropout: f64,
    seed: u64,
}

fn max_relative_error(case: &Case) -> f64 {
    let (i_dim, o_dim) = (3, 5);
    let mut net = GruNetwork::new(i_dim, &case.hidden, o_dim, case.dropout, 0.01, case.seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed + 100);
    // Non-zero biases so every gate path carries gradient.
    net.for_each_tensor_mut(|t| {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    });
    let x = Array3::from_shape_simple_fn((case.t_len, case.batch, i_dim), || rng.random_range(-1.5..1.5));
    let y = Array3::from_shape_simple_fn((case.t_len, case.batch, o_dim), || rng.random_range(-1.0..1.0));
    let train = case.dropout > 0.0;
    let (_, grads) = bptt_gradients(&net, &x, &y, case.warmup, train, 17);
    let analytic = grads.to_flat();
    let base = net.to_flat();
    let loss_at = |flat: &[f64]| {
        let mut n = net.clone();
        n.set_from_flat(flat).unwrap();
        let (out, _) = n.forward_sequence(x.view(), None, train, 17);
        masked_rmse_loss(out.view(), y.view(), case.warmup)
    };
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] += eps;
        let up = loss_at(&p);
        p[k] -= 2.0 * eps;
        let down = loss_at(&p);
        let numeric = (up - down) / (2.0 * eps);
        // Relative error with a 1e-6 floor so exactly-zero gradients compare cleanly.
        let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn single_layer_two_units() {
    let e = max_relative_error(&Case { hidden: vec![2], t_len: 5, batch: 1, warmup: 1, dropout: 0.0, seed: 1 });
    assert!(e < 1e-4, "max relative error {e}");
}

#[test]
fn two_layers_mixed_widths() {
    let e = max_relative_error(&Case { hidden: vec![3, 2], t_len: 7, batch: 2, warmup: 2, dropout: 0.0, seed: 2 });
    assert!(e < 1e-4, "max relative error {e}");
}

#[test]
fn single_layer_four_units_long() {
    let e = max_relative_error(&Case { hidden: vec![4], t_len: 10, batch: 3, warmup: 4, dropout: 0.0, seed: 3 });
    assert!(e < 1e-4, "max relative error {e}");
}

#[test]
fn two_layers_four_units() {
    let e = max_relative_error(&Case { hidden: vec![4, 4], t_len: 6, batch: 2, warmup: 0, dropout: 0.0, seed: 4 });
    assert!(e < 1e-4, "max relative error {e}");
}

#[test]
fn fixed_dropout_mask() {
    let e = max_relative_error(&Case { hidden: vec![3], t_len: 6, batch: 2, warmup: 1, dropout: 0.3, seed: 5 });
    assert!(e < 1e-4, "max relative error {e}");
}

#[test]
fn zero_error_gives_zero_gradients() {
    let net = GruNetwork::new(3, &[2], 5, 0.0, 0.01, 9).unwrap();
    let x = Array3::from_shape_fn((5, 2, 3), |(t, b, i)| (t + b + i) as f64 * 0.1);
    let (y, _) = net.forward_sequence(x.view(), None, false, 0);
    let (loss, g) = bptt_gradients(&net, &x, &y, 1, false, 0);
    assert_eq!(loss, 0.0);
    assert!(g.to_flat().iter().all(|&v| v == 0.0));
}

#[test]
fn constant_tail_error_independent_of_scored_length() {
    // Zero weights: outputs equal the dense bias, so the error is constant in time.
    let mut net = GruNetwork::new(3, &[2], 5, 0.0, 0.01, 9).unwrap();
    let zeros = vec![0.0; net.param_count()];
    net.set_from_flat(&zeros).unwrap();
    net.b_out.fill(0.4);
    let x = Array3::from_elem((12, 1, 3), 0.2);
    let y = Array3::zeros((12, 1, 5));
    let (l_short, g_short) = bptt_gradients(&net, &x, &y, 9, false, 0);
    let (l_long, g_long) = bptt_gradients(&net, &x, &y, 6, false, 0);
    assert!((l_short - 0.4).abs() < 1e-15 && (l_long - 0.4).abs() < 1e-15);
    // RMSE of a constant error does not depend on how many steps are scored.
    for (a, b) in g_short.b_out.iter().zip(g_long.b_out.iter()) {
        assert!((a - 0.2).abs() < 1e-15 && (b - 0.2).abs() < 1e-15);
    }
}
