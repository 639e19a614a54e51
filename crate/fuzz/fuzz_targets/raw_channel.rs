#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::io::read_table;
use velest::vehicle_sim::{ChannelGroup, SensorId};

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else { return };
    let sensor = SensorId::ALL[selector as usize % SensorId::ALL.len()];
    if let Ok(t) = read_table(rest) {
        let _ = ChannelGroup::from_table(sensor, &t);
    }
});
