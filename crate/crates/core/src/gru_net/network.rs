use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;

use super::cell::{leaky_relu, sigmoid, GruLayerParams};
use super::NetError;
use crate::data_pipeline::{INPUT_DIM, OUTPUT_DIM};

pub const DEFAULT_DROPOUT: f64 = 0.075;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Stacked GRU layers, leaky-ReLU and output dropout on the top hidden state, then a
/// linear dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct GruNetwork {
    pub layers: Vec<GruLayerParams>,
    /// hidden_dim(top) × output_dim
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub dropout: f64,
    pub leaky_slope: f64,
}

/// Gradients share the network's shape; `dropout` and `leaky_slope` are carried along
/// unchanged.
pub type Gradients = GruNetwork;

impl GruNetwork {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        dropout: f64,
        leaky_slope: f64,
        seed: u64,
    ) -> Result<Self, NetError> {
        if hidden.is_empty() || hidden.contains(&0) || input_dim == 0 || output_dim == 0 {
            return Err(NetError::Shape("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(GruLayerParams::xavier(prev, h, &mut rng));
            prev = h;
        }
        let limit = (6.0 / (prev + output_dim) as f64).sqrt();
        let u = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let net = Self {
            layers,
            w_out: Array2::from_shape_simple_fn((prev, output_dim), || rng.sample(u)),
            b_out: Array1::zeros(output_dim),
            dropout,
            leaky_slope,
        };
        net.validate()?;
        Ok(net)
    }

    /// One layer of 64 units.
    pub fn rnn1(seed: u64) -> Self {
        Self::new(INPUT_DIM, &[64], OUTPUT_DIM, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE, seed)
            .expect("valid sizes")
    }

    /// Two layers of 32 units.
    pub fn rnn2(seed: u64) -> Self {
        Self::new(INPUT_DIM, &[32, 32], OUTPUT_DIM, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE, seed)
            .expect("valid sizes")
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::Shape(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(NetError::Shape("non-finite activation slope".into()));
        }
        let Some(first) = self.layers.first() else {
            return Err(NetError::Shape("network has no layers".into()));
        };
        let mut prev = first.input_dim;
        for l in &self.layers {
            let h = l.hidden_dim;
            if l.input_dim != prev
                || l.w_x.dim() != (prev, 3 * h)
                || l.w_h.dim() != (h, 3 * h)
                || l.b.len() != 3 * h
            {
                return Err(NetError::Shape("inconsistent layer dimensions".into()));
            }
            prev = h;
        }
        if self.w_out.nrows() != prev || self.b_out.len() != self.w_out.ncols() {
            return Err(NetError::Shape("dense head does not match the top layer".into()));
        }
        if self.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(NetError::Shape("non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.ncols()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_dim).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum::<usize>() + self.w_out.len() + self.b_out.len()
    }

    pub fn zeros_like(&self) -> Gradients {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| GruLayerParams::zeros(l.input_dim, l.hidden_dim))
                .collect(),
            w_out: Array2::zeros(self.w_out.dim()),
            b_out: Array1::zeros(self.b_out.len()),
            dropout: self.dropout,
            leaky_slope: self.leaky_slope,
        }
    }

    /// Visits parameter tensors in checkpoint order: per layer `w_x`, `w_h`, `b`, then
    /// `w_out`, `b_out`; each row-major.
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.w_x.as_slice_mut().expect("standard layout"));
            f(l.w_h.as_slice_mut().expect("standard layout"));
            f(l.b.as_slice_mut().expect("standard layout"));
        }
        f(self.w_out.as_slice_mut().expect("standard layout"));
        f(self.b_out.as_slice_mut().expect("standard layout"));
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w_x.iter());
            out.extend(l.w_h.iter());
            out.extend(l.b.iter());
        }
        out.extend(self.w_out.iter());
        out.extend(self.b_out.iter());
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), NetError> {
        if flat.len() != self.param_count() {
            return Err(NetError::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        self.for_each_tensor_mut(|t| {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        });
        Ok(())
    }

    /// Runs `[T, B, input]` sequences from hidden states `h0` (zeros when `None`).
    /// Returns `[T, B, output]` and the final hidden state of every layer.
    pub fn forward_sequence(
        &self,
        inputs: ArrayView3<f64>,
        h0: Option<&[Array2<f64>]>,
        train: bool,
        dropout_seed: u64,
    ) -> (Array3<f64>, Vec<Array2<f64>>) {
        let cache = self.forward_cached(inputs, h0, train, dropout_seed);
        let (t, b, _) = inputs.dim();
        let h_t = cache
            .layers
            .iter()
            .map(|l| l.hs.slice(s![t * b.., ..]).to_owned())
            .collect();
        let out = cache
            .output
            .into_shape_with_order((t, b, self.output_dim()))
            .expect("row count T·B");
        (out, h_t)
    }

    pub(crate) fn forward_cached(
        &self,
        inputs: ArrayView3<f64>,
        h0: Option<&[Array2<f64>]>,
        train: bool,
        dropout_seed: u64,
    ) -> ForwardCache {
        let (t_len, batch, i_dim) = inputs.dim();
        assert_eq!(i_dim, self.input_dim(), "input width");
        let x0 = inputs
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t_len * batch, i_dim))
            .expect("contiguous");
        let mut layers: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (k, p) in self.layers.iter().enumerate() {
            let x = match layers.last() {
                Some(prev) => prev.hs.slice(s![batch.., ..]).to_owned(),
                None => x0.clone(),
            };
            let h_init = match h0 {
                Some(h) => h[k].clone(),
                None => Array2::zeros((batch, p.hidden_dim)),
            };
            layers.push(layer_forward(p, x, h_init, t_len, batch));
        }
        let top = layers.last().expect("at least one layer");
        let h_top = top.hs.slice(s![batch.., ..]);
        let slope = self.leaky_slope;
        let mut act = h_top.mapv(|v| leaky_relu(v, slope));
        let mask = if train && self.dropout > 0.0 {
            let keep = 1.0 / (1.0 - self.dropout);
            let p = self.dropout;
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let m = Array2::from_shape_simple_fn(act.dim(), || {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep
                }
            });
            act *= &m;
            Some(m)
        } else {
            None
        };
        let output = act.dot(&self.w_out) + &self.b_out;
        ForwardCache {
            t_len,
            batch,
            layers,
            act,
            mask,
            output,
        }
    }

    /// Reverse-mode gradients given dL/d(output) with shape `[T, B, output]`.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: ArrayView3<f64>) -> Gradients {
        let (t_len, batch) = (cache.t_len, cache.batch);
        let mut g = self.zeros_like();
        let dy = d_out
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t_len * batch, self.output_dim()))
            .expect("contiguous");
        g.w_out = cache.act.t().dot(&dy);
        g.b_out = dy.sum_axis(Axis(0));
        let mut dh = dy.dot(&self.w_out.t());
        if let Some(m) = &cache.mask {
            dh *= m;
        }
        let top = cache.layers.last().expect("at least one layer");
        let slope = self.leaky_slope;
        Zip::from(&mut dh)
            .and(top.hs.slice(s![batch.., ..]))
            .for_each(|d, &h| {
                if h < 0.0 {
                    *d *= slope;
                }
            });
        for (k, p) in self.layers.iter().enumerate().rev() {
            let (gl, dx) = layer_backward(p, &cache.layers[k], dh.view(), t_len, batch, k > 0);
            g.layers[k] = gl;
            if let Some(dx) = dx {
                dh = dx;
            }
        }
        g
    }
}

pub(crate) struct LayerCache {
    /// Layer input, `[T·B, I]`.
    x: Array2<f64>,
    /// Hidden states including the initial one, `[(T+1)·B, H]`.
    hs: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    c: Array2<f64>,
}

pub(crate) struct ForwardCache {
    t_len: usize,
    batch: usize,
    layers: Vec<LayerCache>,
    /// Top activation after leaky-ReLU and dropout, `[T·B, H]`.
    act: Array2<f64>,
    mask: Option<Array2<f64>>,
    /// `[T·B, output]`
    pub output: Array2<f64>,
}

impl ForwardCache {
    pub fn output_3d(&self) -> ArrayView3<'_, f64> {
        self.output
            .view()
            .into_shape_with_order((self.t_len, self.batch, self.output.ncols()))
            .expect("row count T·B")
    }
}

fn layer_forward(p: &GruLayerParams, x: Array2<f64>, h0: Array2<f64>, t_len: usize, batch: usize) -> LayerCache {
    let h = p.hidden_dim;
    let xw = x.dot(&p.w_x) + &p.b;
    let mut hs = Array2::zeros(((t_len + 1) * batch, h));
    hs.slice_mut(s![..batch, ..]).assign(&h0);
    let mut z = Array2::zeros((t_len * batch, h));
    let mut r = Array2::zeros((t_len * batch, h));
    let mut c = Array2::zeros((t_len * batch, h));
    let wh_zr = p.w_h.slice(s![.., ..2 * h]);
    let wh_c = p.w_h.slice(s![.., 2 * h..]);
    for t in 0..t_len {
        let rows = t * batch..(t + 1) * batch;
        let hp = hs.slice(s![rows.clone(), ..]).to_owned();
        let mut gates = hp.dot(&wh_zr);
        gates += &xw.slice(s![rows.clone(), ..2 * h]);
        gates.mapv_inplace(sigmoid);
        let zt = gates.slice(s![.., ..h]);
        let rt = gates.slice(s![.., h..]);
        let rh = &rt * &hp;
        let mut ct = rh.dot(&wh_c);
        ct += &xw.slice(s![rows.clone(), 2 * h..]);
        ct.mapv_inplace(f64::tanh);
        let mut ht = hs.slice_mut(s![(t + 1) * batch..(t + 2) * batch, ..]);
        Zip::from(&mut ht)
            .and(&zt)
            .and(&hp)
            .and(&ct)
            .for_each(|o, &zz, &hh, &cc| *o = zz * hh + (1.0 - zz) * cc);
        z.slice_mut(s![rows.clone(), ..]).assign(&zt);
        r.slice_mut(s![rows.clone(), ..]).assign(&rt);
        c.slice_mut(s![rows, ..]).assign(&ct);
    }
    LayerCache { x, hs, z, r, c }
}

/// Gradients of one layer given dL/d(outputs) `[T·B, H]`; optionally returns dL/d(inputs).
fn layer_backward(
    p: &GruLayerParams,
    cache: &LayerCache,
    d_out: ArrayView2<f64>,
    t_len: usize,
    batch: usize,
    want_dx: bool,
) -> (GruLayerParams, Option<Array2<f64>>) {
    let h = p.hidden_dim;
    let mut g = GruLayerParams::zeros(p.input_dim, h);
    let mut d_pre = Array2::<f64>::zeros((t_len * batch, 3 * h));
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let wh_zr = p.w_h.slice(s![.., ..2 * h]);
    let wh_c = p.w_h.slice(s![.., 2 * h..]);
    for t in (0..t_len).rev() {
        let rows = t * batch..(t + 1) * batch;
        let hp = cache.hs.slice(s![rows.clone(), ..]);
        let zt = cache.z.slice(s![rows.clone(), ..]);
        let rt = cache.r.slice(s![rows.clone(), ..]);
        let ct = cache.c.slice(s![rows.clone(), ..]);
        let dh = &d_out.slice(s![rows.clone(), ..]) + &dh_next;

        let mut dpre_t = d_pre.slice_mut(s![rows, ..]);
        // Candidate pre-activation.
        let mut dac = Array2::zeros((batch, h));
        Zip::from(&mut dac)
            .and(&dh)
            .and(&zt)
            .and(&ct)
            .for_each(|o, &d, &zz, &cc| *o = d * (1.0 - zz) * (1.0 - cc * cc));
        let rh = &rt * &hp;
        g.w_h
            .slice_mut(s![.., 2 * h..])
            .scaled_add(1.0, &rh.t().dot(&dac));
        let d_rh = dac.dot(&wh_c.t());
        // Update and reset gate pre-activations.
        let mut dzr = Array2::zeros((batch, 2 * h));
        Zip::from(dzr.slice_mut(s![.., ..h]))
            .and(&dh)
            .and(&hp)
            .and(&ct)
            .and(&zt)
            .for_each(|o, &d, &hh, &cc, &zz| *o = d * (hh - cc) * zz * (1.0 - zz));
        Zip::from(dzr.slice_mut(s![.., h..]))
            .and(&d_rh)
            .and(&hp)
            .and(&rt)
            .for_each(|o, &d, &hh, &rr| *o = d * hh * rr * (1.0 - rr));
        g.w_h
            .slice_mut(s![.., ..2 * h])
            .scaled_add(1.0, &hp.t().dot(&dzr));
        let mut next = dzr.dot(&wh_zr.t());
        Zip::from(&mut next)
            .and(&dh)
            .and(&zt)
            .and(&d_rh)
            .and(&rt)
            .for_each(|o, &d, &zz, &drh, &rr| *o += d * zz + drh * rr);
        dh_next = next;
        dpre_t.slice_mut(s![.., ..2 * h]).assign(&dzr);
        dpre_t.slice_mut(s![.., 2 * h..]).assign(&dac);
    }
    g.w_x = cache.x.t().dot(&d_pre);
    g.b = d_pre.sum_axis(Axis(0));
    let dx = want_dx.then(|| d_pre.dot(&p.w_x.t()));
    (g, dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn random_inputs(t: usize, b: usize, i: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn((t, b, i), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn eval_mode_is_deterministic_and_ignores_seed() {
        let net = GruNetwork::new(4, &[3, 2], 5, 0.3, 0.01, 1).unwrap();
        let x = random_inputs(7, 2, 4, 2);
        let (a, ha) = net.forward_sequence(x.view(), None, false, 1);
        let (b, hb) = net.forward_sequence(x.view(), None, false, 99);
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let net = GruNetwork::new(4, &[3], 5, 0.0, 0.01, 1).unwrap();
        let x = random_inputs(6, 3, 4, 2);
        assert_eq!(
            net.forward_sequence(x.view(), None, true, 5).0,
            net.forward_sequence(x.view(), None, false, 5).0
        );
    }

    #[test]
    fn zero_network_outputs_dense_bias() {
        let mut net = GruNetwork::new(4, &[3], 5, 0.0, 0.01, 1).unwrap();
        let flat = vec![0.0; net.param_count()];
        net.set_from_flat(&flat).unwrap();
        net.b_out = Array1::from(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let (y, _) = net.forward_sequence(random_inputs(5, 2, 4, 3).view(), None, false, 0);
        for row in y.lanes(Axis(2)) {
            assert_eq!(row, net.b_out.view());
        }
    }

    #[test]
    fn chunked_forward_matches_whole_sequence() {
        let net = GruNetwork::new(4, &[3, 3], 5, 0.1, 0.01, 4).unwrap();
        let x = random_inputs(10, 1, 4, 5);
        let (whole, _) = net.forward_sequence(x.view(), None, false, 0);
        let (a, h) = net.forward_sequence(x.slice(s![..4, .., ..]), None, false, 0);
        let (b, _) = net.forward_sequence(x.slice(s![4.., .., ..]), Some(&h), false, 0);
        assert!((&whole.slice(s![..4, .., ..]) - &a).iter().all(|d| d.abs() < 1e-14));
        assert!((&whole.slice(s![4.., .., ..]) - &b).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn batched_forward_matches_cell_steps() {
        use super::super::cell::gru_cell_step;
        let net = GruNetwork::new(3, &[4], 5, 0.0, 0.2, 6).unwrap();
        let x = random_inputs(5, 2, 3, 7);
        let (y, _) = net.forward_sequence(x.view(), None, false, 0);
        for b in 0..2 {
            let mut hst = Array1::zeros(4);
            for t in 0..5 {
                hst = gru_cell_step(&net.layers[0], x.slice(s![t, b, ..]), hst.view());
                let expect = hst.mapv(|v| leaky_relu(v, 0.2)).dot(&net.w_out) + &net.b_out;
                assert!((&y.slice(s![t, b, ..]) - &expect).iter().all(|d| d.abs() < 1e-14));
            }
        }
    }

    #[test]
    fn dropout_is_unbiased_on_average() {
        // Mean of the dropped activation over many masks equals the undropped activation.
        let net = GruNetwork::new(2, &[4], 1, 0.25, 0.01, 8).unwrap();
        let x = random_inputs(1, 1, 2, 9);
        let base = net.forward_cached(x.view(), None, false, 0).act;
        let n = 20_000;
        let mut sum = Array2::<f64>::zeros(base.dim());
        let mut sumsq = Array2::<f64>::zeros(base.dim());
        for seed in 0..n {
            let a = net.forward_cached(x.view(), None, true, seed).act;
            sumsq += &a.mapv(|v| v * v);
            sum += &a;
        }
        let nf = n as f64;
        for ((s, ss), b) in sum.iter().zip(sumsq.iter()).zip(base.iter()) {
            let mean = s / nf;
            let se = ((ss / nf - mean * mean).max(0.0) / nf).sqrt();
            assert!((mean - b).abs() <= 3.0 * se + 1e-12, "{mean} vs {b} (se {se})");
        }
    }

    #[test]
    fn flat_round_trip_and_validation() {
        let net = GruNetwork::rnn2(3);
        assert_eq!(net.hidden_dims(), vec![32, 32]);
        let mut other = GruNetwork::rnn2(4);
        other.set_from_flat(&net.to_flat()).unwrap();
        assert_eq!(other, net);
        assert!(other.set_from_flat(&[0.0; 3]).is_err());
        let mut bad = net.clone();
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
        assert_eq!(GruNetwork::rnn1(0).param_count(), 3 * 64 * (13 + 64 + 1) + 64 * 5 + 5);
    }
}
