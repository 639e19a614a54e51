#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::data_pipeline::{check_grid, frames_from_table, states_from_table};
use velest::io::read_table;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_table(data) {
        if let Ok(frames) = frames_from_table(&t) {
            let _ = check_grid(&frames);
            for f in &frames {
                let _ = f.network_inputs();
            }
        }
        let _ = states_from_table(&t);
    }
});
