#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::gru_net::TrainingHistory;
use velest::io::read_table;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_table(data) {
        let _ = TrainingHistory::from_table(&t);
    }
});
