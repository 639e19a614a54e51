#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::io::{read_table, write_table};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_table(data) {
        let mut buf = Vec::new();
        write_table(&mut buf, &t).expect("write parsed table");
        let again = read_table(buf.as_slice()).expect("re-read written table");
        assert_eq!(t.header, again.header);
        assert_eq!(t.rows.len(), again.rows.len());
    }
});
