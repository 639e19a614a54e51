#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::data_pipeline::{mkf_config_for_manifest, NormStats, Provenance};
use velest::gru_net::TrainConfig;
use velest::io::KeyValues;
use velest::mkf::MkfConfig;
use velest::vehicle_sim::{parse_freeze_events, VehicleParams};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_freeze_events(text);
    let Ok(kv) = KeyValues::parse(text) else { return };
    let _ = MkfConfig::from_kv(&kv);
    let _ = mkf_config_for_manifest(&kv);
    let _ = TrainConfig::from_kv(&kv);
    let _ = NormStats::from_kv(&kv);
    let _ = Provenance::from_manifest(&kv);
    let _ = VehicleParams::from_kv(&kv, "vehicle.");
});
