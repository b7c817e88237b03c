#![no_main]
use lacn_twin::TablePattern;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = TablePattern::parse_csv(data) {
        let max = table.max_gain_dbi();
        for (daz, del) in [(0.0, 0.0), (-180.0, 90.0), (179.9, -90.0), (1e9, -1e9)] {
            let g = table.gain_at_offsets(daz, del);
            let slack = 1e-9 * max.abs().max(1.0);
            assert!(g.is_finite() && g <= max + slack, "gain {g} at ({daz}, {del})");
        }
    }
});
