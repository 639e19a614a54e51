#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::io::read_table;
use velest::mkf::estimates_from_table;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_table(data) {
        let _ = estimates_from_table(&t);
    }
});
