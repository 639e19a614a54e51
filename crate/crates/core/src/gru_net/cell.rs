use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::Uniform;

/// Parameters of one GRU layer.
///
/// The three gates share storage: columns `0..H` of `w_x`, `w_h` and `b` belong to the
/// update gate z, `H..2H` to the reset gate r and `2H..3H` to the candidate. The gate
/// matrix `W_g` acting on `[x; h]` is therefore `[w_x[:, g]ᵀ  w_h[:, g]ᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// input_dim × 3·hidden_dim
    pub w_x: Array2<f64>,
    /// hidden_dim × 3·hidden_dim
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Update,
    Reset,
    Candidate,
}

impl Gate {
    fn columns(self, h: usize) -> std::ops::Range<usize> {
        let k = self as usize;
        k * h..(k + 1) * h
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

impl GruLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w_x: Array2::zeros((input_dim, 3 * hidden_dim)),
            w_h: Array2::zeros((hidden_dim, 3 * hidden_dim)),
            b: Array1::zeros(3 * hidden_dim),
        }
    }

    /// Xavier-uniform weights per gate matrix (fan-in I+H, fan-out H), zero biases.
    pub fn xavier<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input_dim + 2 * hidden_dim) as f64).sqrt();
        let u = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let mut p = Self::zeros(input_dim, hidden_dim);
        p.w_x.mapv_inplace(|_| rng.sample(u));
        p.w_h.mapv_inplace(|_| rng.sample(u));
        p
    }

    pub fn param_count(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.b.len()
    }

    /// `W_g` as a hidden_dim × (input_dim + hidden_dim) matrix.
    pub fn gate_matrix(&self, gate: Gate) -> Array2<f64> {
        let cols = gate.columns(self.hidden_dim);
        concatenate(
            Axis(1),
            &[
                self.w_x.slice(s![.., cols.clone()]).t(),
                self.w_h.slice(s![.., cols]).t(),
            ],
        )
        .expect("matching row counts")
    }

    pub fn gate_bias(&self, gate: Gate) -> ArrayView1<'_, f64> {
        self.b.slice(s![gate.columns(self.hidden_dim)])
    }

    pub fn set_gate(&mut self, gate: Gate, matrix: &Array2<f64>, bias: &Array1<f64>) {
        let (i, h) = (self.input_dim, self.hidden_dim);
        assert_eq!(matrix.dim(), (h, i + h));
        let cols = gate.columns(h);
        self.w_x
            .slice_mut(s![.., cols.clone()])
            .assign(&matrix.slice(s![.., ..i]).t());
        self.w_h
            .slice_mut(s![.., cols.clone()])
            .assign(&matrix.slice(s![.., i..]).t());
        self.b.slice_mut(s![cols]).assign(bias);
    }
}

/// One GRU step: h = z∘h_prev + (1−z)∘tanh(W_h·[x; r∘h_prev] + b_h).
pub fn gru_cell_step(p: &GruLayerParams, x: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> Array1<f64> {
    let h = p.hidden_dim;
    let xw = x.dot(&p.w_x) + &p.b;
    let hw = h_prev.dot(&p.w_h.slice(s![.., ..2 * h]));
    let z = (&xw.slice(s![..h]) + &hw.slice(s![..h])).mapv(sigmoid);
    let r = (&xw.slice(s![h..2 * h]) + &hw.slice(s![h..])).mapv(sigmoid);
    let rh = &r * &h_prev;
    let c = (&xw.slice(s![2 * h..]) + &rh.dot(&p.w_h.slice(s![.., 2 * h..]))).mapv(f64::tanh);
    &z * &h_prev + &((1.0 - &z) * &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activation_examples() {
        assert_eq!(leaky_relu(5.0, 0.01), 5.0);
        assert_eq!(leaky_relu(-1.0, 0.01), -0.01);
        assert_eq!(leaky_relu(0.0, 0.3), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let p = GruLayerParams::zeros(3, 2);
        let h = gru_cell_step(&p, array![1.0, 2.0, 3.0].view(), array![1.0, -2.0].view());
        assert_eq!(h, array![0.5, -1.0]);
        let h = gru_cell_step(&p, array![1.0, 2.0, 3.0].view(), array![0.0, 0.0].view());
        assert_eq!(h, array![0.0, 0.0]);
    }

    #[test]
    fn gate_matrix_matches_explicit_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = GruLayerParams::xavier(3, 2, &mut rng);
        p.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let x = array![0.3, -1.2, 0.8];
        let hp = array![0.4, -0.7];
        let xh = concatenate(Axis(0), &[x.view(), hp.view()]).unwrap();
        let z = (p.gate_matrix(Gate::Update).dot(&xh) + p.gate_bias(Gate::Update)).mapv(sigmoid);
        let r = (p.gate_matrix(Gate::Reset).dot(&xh) + p.gate_bias(Gate::Reset)).mapv(sigmoid);
        let xrh = concatenate(Axis(0), &[x.view(), (&r * &hp).view()]).unwrap();
        let c = (p.gate_matrix(Gate::Candidate).dot(&xrh) + p.gate_bias(Gate::Candidate)).mapv(f64::tanh);
        let expected = &z * &hp + &((1.0 - &z) * &c);
        let got = gru_cell_step(&p, x.view(), hp.view());
        assert!((&got - &expected).iter().all(|d| d.abs() < 1e-15));

        let mut q = GruLayerParams::zeros(3, 2);
        for g in [Gate::Update, Gate::Reset, Gate::Candidate] {
            q.set_gate(g, &p.gate_matrix(g), &p.gate_bias(g).to_owned());
        }
        assert_eq!(q, p);
    }

    proptest! {
        #[test]
        fn state_stays_bounded(seed in 0u64..1000, scale in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = GruLayerParams::xavier(4, 3, &mut rng);
            p.w_x.mapv_inplace(|w| w * scale);
            p.b.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            let x = Array1::from_shape_fn(4, |_| rng.random_range(-10.0..10.0));
            let hp = Array1::from_shape_fn(3, |_| rng.random_range(-3.0..3.0));
            let h = gru_cell_step(&p, x.view(), hp.view());
            let bound = hp.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(h.iter().all(|v| v.abs() <= bound + 1e-12));
        }
    }
}
