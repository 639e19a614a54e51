use ndarray::{s, Array2, Array3};

use super::network::GruNetwork;
use super::train::normalize_inputs;
use crate::data_pipeline::{Dataset, NormStats, SensorFrame};
use crate::mkf::StateEstimate;

/// Frames processed per forward call; the hidden state carries across chunks.
pub const PREDICT_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkEstimate {
    pub t: f64,
    pub state: StateEstimate,
    /// False during the warm-up after the stream starts.
    pub reliable: bool,
}

/// Runs the network causally over a stream with persistent hidden state, in eval mode.
/// The first `warmup` outputs are flagged unreliable.
pub fn predict_stream(net: &GruNetwork, norm: &NormStats, frames: &[SensorFrame], warmup: usize) -> Vec<NetworkEstimate> {
    let ds = Dataset::new(frames.to_vec(), None);
    let x = normalize_inputs(&ds, norm);
    let mut h: Option<Vec<Array2<f64>>> = None;
    let mut out = Vec::with_capacity(frames.len());
    let mut start = 0;
    while start < frames.len() {
        let end = (start + PREDICT_CHUNK).min(frames.len());
        let chunk = x
            .slice(s![start..end, ..])
            .to_owned()
            .insert_axis(ndarray::Axis(1));
        let chunk: Array3<f64> = chunk;
        let (y, h_next) = net.forward_sequence(chunk.view(), h.as_deref(), false, 0);
        for k in 0..end - start {
            let row: Vec<f64> = y.slice(s![k, 0, ..]).to_vec();
            out.push(NetworkEstimate {
                t: frames[start + k].t,
                state: StateEstimate::from_array(norm.denormalize_output(&row)),
                reliable: start + k >= warmup,
            });
        }
        h = Some(h_next);
        start = end;
    }
    out
}
