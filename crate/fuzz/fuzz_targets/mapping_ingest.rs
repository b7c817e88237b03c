#![no_main]
use lacn_twin::validation::MeasurementMapping;
use libfuzzer_sys::fuzz_target;

// Input layout: mapping JSON, a NUL byte, then the CSV body.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(json) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let Ok(mapping) = MeasurementMapping::from_json_str(json) else {
        return;
    };
    let csv = data.get(split + 1..).unwrap_or_default();
    let _ = mapping.ingest(csv, "fuzz");
});
