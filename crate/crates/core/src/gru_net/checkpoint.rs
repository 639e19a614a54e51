//! Checkpoint: a `key=value` text header terminated by an `end_header` line, followed by
//! every parameter as a little-endian f64 in [`GruNetwork::to_flat`] order.

use std::path::Path;

use super::cell::GruLayerParams;
use super::network::GruNetwork;
use super::NetError;
use crate::data_pipeline::NormStats;
use crate::io::KeyValues;

pub const CHECKPOINT_FORMAT: &str = "velest-gru-checkpoint";
pub const GATE_CONVENTION: &str = "h=z*h_prev+(1-z)*tanh(W_h[x;r*h_prev]+b_h)";
const LAYOUT: &str = "per layer w_x[input,3*hidden](z|r|h) w_h[hidden,3*hidden](z|r|h) b[3*hidden]; w_out[hidden,output] b_out[output]; row-major";
const END_MARKER: &[u8] = b"end_header\n";
const MAX_UNITS: usize = 4096;
const MAX_LAYERS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: GruNetwork,
    pub norm: NormStats,
    pub warmup_steps: usize,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let net = &ck.net;
    let mut kv = KeyValues::new();
    kv.set("format", CHECKPOINT_FORMAT);
    kv.set("version", 1);
    kv.set("gate_convention", GATE_CONVENTION);
    kv.set("layout", LAYOUT);
    kv.set("input_dim", net.input_dim());
    kv.set(
        "hidden_dims",
        net.hidden_dims().iter().map(usize::to_string).collect::<Vec<_>>().join(","),
    );
    kv.set("output_dim", net.output_dim());
    kv.set("dropout", net.dropout);
    kv.set("leaky_slope", net.leaky_slope);
    kv.set("warmup_steps", ck.warmup_steps);
    ck.norm.write_kv(&mut kv);
    kv.set("param_count", net.param_count());
    let mut bytes = kv.to_text().into_bytes();
    bytes.extend_from_slice(END_MARKER);
    for v in net.to_flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn bad(msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NetError> {
    let split = if bytes.starts_with(END_MARKER) {
        0
    } else {
        bytes
            .windows(END_MARKER.len() + 1)
            .position(|w| w[0] == b'\n' && &w[1..] == END_MARKER)
            .map(|p| p + 1)
            .ok_or_else(|| bad("missing end_header line"))?
    };
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
    let body = &bytes[split + END_MARKER.len()..];
    let kv = KeyValues::parse(header)?;
    if kv.get("format") != Some(CHECKPOINT_FORMAT) {
        return Err(bad("not a GRU checkpoint"));
    }
    if kv.parse_required::<u32>("version")? != 1 {
        return Err(bad("unsupported checkpoint version"));
    }
    if kv.get("gate_convention") != Some(GATE_CONVENTION) {
        return Err(bad("unsupported gate convention"));
    }
    let input_dim: usize = kv.parse_required("input_dim")?;
    let output_dim: usize = kv.parse_required("output_dim")?;
    let hidden: Vec<usize> = kv
        .parse_list("hidden_dims")?
        .ok_or_else(|| bad("missing hidden_dims"))?;
    if hidden.is_empty()
        || hidden.len() > MAX_LAYERS
        || hidden.iter().chain([&input_dim, &output_dim]).any(|&d| d == 0 || d > MAX_UNITS)
    {
        return Err(bad("layer sizes out of range"));
    }
    let norm = NormStats::from_kv(&kv)?;
    if input_dim != norm.input_mean.len() || output_dim != norm.output_mean.len() {
        return Err(bad("normalization statistics do not match the network"));
    }
    let mut layers = Vec::with_capacity(hidden.len());
    let mut prev = input_dim;
    for &h in &hidden {
        layers.push(GruLayerParams::zeros(prev, h));
        prev = h;
    }
    let mut net = GruNetwork {
        layers,
        w_out: ndarray::Array2::zeros((prev, output_dim)),
        b_out: ndarray::Array1::zeros(output_dim),
        dropout: kv.parse_required("dropout")?,
        leaky_slope: kv.parse_required("leaky_slope")?,
    };
    let count: usize = kv.parse_required("param_count")?;
    if count != net.param_count() {
        return Err(bad(format!("param_count {count} does not match the declared layers ({})", net.param_count())));
    }
    if body.len() != 8 * count {
        return Err(bad(format!("expected {} parameter bytes, found {}", 8 * count, body.len())));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    net.set_from_flat(&flat)?;
    net.validate().map_err(|e| bad(e.to_string()))?;
    Ok(Checkpoint {
        net,
        norm,
        warmup_steps: kv.parse_or("warmup_steps", 200)?,
    })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), NetError> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| NetError::Format(e.into()))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    let bytes = std::fs::read(path).map_err(|e| NetError::Format(e.into()))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut norm = NormStats::identity();
        norm.input_mean[3] = 0.1 + 0.2;
        norm.output_std[1] = 1.0 / 3.0;
        Checkpoint {
            net: GruNetwork::rnn2(5),
            norm,
            warmup_steps: 200,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.contains("format=velest-gru-checkpoint"));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode_checkpoint(&sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_checkpoint(b"").is_err());
        assert!(decode_checkpoint(b"end_header\n").is_err());
        let text = String::from_utf8_lossy(&bytes).replace("hidden_dims=32,32", "hidden_dims=32,31");
        assert!(decode_checkpoint(text.as_bytes()).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_checkpoint(&nan).is_err());
    }
}
