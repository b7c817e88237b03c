#![no_main]
use lacn_twin::synth::TrajectorySpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = TrajectorySpec::from_json_str(text) {
        // validation bounds the number of points
        let _ = t.points();
    }
});
