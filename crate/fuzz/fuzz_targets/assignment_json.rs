#![no_main]
use lacn_twin::BeamAssignment;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(a) = BeamAssignment::from_json_str(text) {
        let again = BeamAssignment::from_json_str(&a.to_json_string()).expect("round trip");
        assert_eq!(a, again);
    }
});
