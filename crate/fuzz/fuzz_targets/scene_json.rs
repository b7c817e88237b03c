#![no_main]
use std::path::Path;

use lacn_twin::SceneConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // table pattern paths resolve against a directory that does not exist
    if let Ok(scene) = SceneConfig::from_json_str(text, Path::new("/nonexistent")) {
        let again = SceneConfig::from_json_str(&scene.to_json_string(), Path::new("/nonexistent"))
            .expect("a validated scene re-parses");
        assert_eq!(scene, again);
    }
});
