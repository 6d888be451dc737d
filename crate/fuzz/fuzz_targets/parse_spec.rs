#![no_main]

use libfuzzer_sys::fuzz_target;
use lossnet_core::NetworkSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = NetworkSpec::from_json_bytes(data) else {
        return;
    };
    let violations = spec.validate();
    // Serializing and reparsing must preserve the document and its verdict.
    let again = NetworkSpec::from_json(&spec.to_json()).expect("own output parses");
    assert_eq!(again.validate().is_empty(), violations.is_empty());
});
