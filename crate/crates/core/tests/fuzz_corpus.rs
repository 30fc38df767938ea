//! Replays the checked-in fuzz seeds through the parser entry points.

use std::path::{Path, PathBuf};

use dipl0::admm::RunConfig;
use dipl0::config::ConfigFile;
use dipl0::io::load_image_from_memory;
use dipl0::net::checkpoint;
use dipl0::report::RunReport;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn report_seeds_round_trip() {
    for (path, bytes) in seeds("report_parse") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let report = RunReport::parse(text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunReport::parse(&report.to_text()).unwrap(), report);
        assert_eq!(report.history.len(), report.config.outer_iterations);
    }
}

#[test]
fn checkpoint_seeds_decode_or_fail_cleanly() {
    let mut decoded = 0;
    for (_, bytes) in seeds("checkpoint_decode") {
        if let Ok(ckpt) = checkpoint::decode(&bytes) {
            decoded += 1;
            assert!(!ckpt.layers.is_empty());
        }
        for cut in 0..bytes.len().min(64) {
            assert!(checkpoint::decode(&bytes[..cut]).is_err());
        }
    }
    assert!(decoded >= 1);
}

#[test]
fn config_seeds_parse() {
    for (path, bytes) in seeds("config_parse") {
        let cfg = ConfigFile::parse(std::str::from_utf8(&bytes).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.apply(RunConfig::smoothing(3)).validate().unwrap();
    }
}

#[test]
fn image_seeds_decode() {
    for (path, bytes) in seeds("image_decode") {
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        match load_image_from_memory(&bytes) {
            Ok(img) => {
                assert!(img.is_normalized(), "{name}");
                assert!(img.channels() == 1 || img.channels() == 3, "{name}");
            }
            Err(e) => assert!(name.contains("16"), "{name}: {e}"),
        }
    }
}
