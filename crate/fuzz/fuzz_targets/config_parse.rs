#![no_main]

use dipl0::admm::RunConfig;
use dipl0::config::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ConfigFile::parse(text) {
        let _ = cfg.apply(RunConfig::smoothing(3)).validate();
    }
});
