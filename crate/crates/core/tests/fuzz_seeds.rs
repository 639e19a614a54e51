//! Replays the checked-in fuzz corpus through the same entry points the fuzz targets use,
//! so the seeds stay valid inputs as the formats evolve.

use std::path::PathBuf;

use velest::data_pipeline::{check_grid, frames_from_table, mkf_config_for_manifest, states_from_table, NormStats, Provenance};
use velest::gru_net::{decode_checkpoint, encode_checkpoint, TrainConfig, TrainingHistory};
use velest::io::{read_table, write_table, KeyValues};
use velest::mkf::{estimates_from_table, MkfConfig};
use velest::vehicle_sim::{parse_freeze_events, ChannelGroup, SensorId, VehicleParams};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn kv_seeds_round_trip() {
    for (name, data) in seeds("kv_parse") {
        let kv = KeyValues::parse(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv, "{name}");
    }
}

#[test]
fn table_seeds_round_trip() {
    for (name, data) in seeds("read_table") {
        let t = read_table(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut buf = Vec::new();
        write_table(&mut buf, &t).unwrap();
        let again = read_table(buf.as_slice()).unwrap();
        assert_eq!((t.header, t.rows.len()), (again.header, again.rows.len()), "{name}");
    }
}

#[test]
fn raw_channel_seeds_decode() {
    for (name, data) in seeds("raw_channel") {
        let sensor = SensorId::ALL[data[0] as usize % SensorId::ALL.len()];
        let t = read_table(&data[1..]).unwrap();
        let g = ChannelGroup::from_table(sensor, &t).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(sensor.name(), name);
        assert!(!g.is_empty());
    }
}

#[test]
fn frame_and_state_seeds_decode() {
    for (name, data) in seeds("frames_csv") {
        let t = read_table(data.as_slice()).unwrap();
        if name == "frames" {
            let frames = frames_from_table(&t).unwrap();
            check_grid(&frames).unwrap();
        } else {
            assert!(!states_from_table(&t).unwrap().1.is_empty());
        }
    }
    for (name, data) in seeds("estimates_csv") {
        let t = read_table(data.as_slice()).unwrap();
        assert!(!estimates_from_table(&t).unwrap_or_else(|e| panic!("{name}: {e}")).is_empty());
    }
    for (name, data) in seeds("history_csv") {
        let t = read_table(data.as_slice()).unwrap();
        assert!(!TrainingHistory::from_table(&t).unwrap_or_else(|e| panic!("{name}: {e}")).records.is_empty());
    }
}

#[test]
fn checkpoint_seeds_round_trip() {
    for (name, data) in seeds("checkpoint") {
        let ck = decode_checkpoint(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(decode_checkpoint(&encode_checkpoint(&ck)).unwrap().net, ck.net);
    }
}

#[test]
fn config_seeds_parse() {
    for (name, data) in seeds("config_kv") {
        let text = std::str::from_utf8(&data).unwrap();
        let kv = KeyValues::parse(text).unwrap();
        let _ = parse_freeze_events(text);
        if name == "manifest" {
            mkf_config_for_manifest(&kv).unwrap();
            Provenance::from_manifest(&kv).unwrap();
            VehicleParams::from_kv(&kv, "vehicle.").unwrap();
        } else {
            assert_eq!(TrainConfig::from_kv(&kv).unwrap().lr_decay, 0.97);
        }
        let _ = MkfConfig::from_kv(&kv);
        let _ = NormStats::from_kv(&kv);
    }
}
