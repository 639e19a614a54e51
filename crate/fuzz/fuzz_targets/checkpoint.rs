#![no_main]

use libfuzzer_sys::fuzz_target;
use velest::gru_net::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode_checkpoint(data) {
        let again = decode_checkpoint(&encode_checkpoint(&ck)).expect("decode of encoded checkpoint");
        assert_eq!(ck.net.param_count(), again.net.param_count());
    }
});
