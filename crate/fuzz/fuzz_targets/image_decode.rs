#![no_main]

use dipl0::io::load_image_from_memory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = load_image_from_memory(data) {
        assert!(img.is_normalized());
        assert!(img.channels() == 1 || img.channels() == 3);
    }
});
