#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::io::KeyValues;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kv) = KeyValues::parse(text) {
        // Whatever parses must survive a write/read round trip.
        let again = KeyValues::parse(&kv.to_text()).expect("re-parse of written text");
        assert_eq!(kv, again);
    }
});
