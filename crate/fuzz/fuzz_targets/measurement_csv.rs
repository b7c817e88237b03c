#![no_main]
use lacn_twin::MeasurementSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = MeasurementSet::from_csv_reader(data, "fuzz") {
        let mut out = Vec::new();
        set.write_csv(&mut out).expect("writing to memory succeeds");
        let again = MeasurementSet::from_csv_reader(out.as_slice(), "fuzz").expect("output re-parses");
        assert_eq!(set.len(), again.len());
    }
});
