#![no_main]

use dipl0::report::RunReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = RunReport::parse(text) {
        let again = RunReport::parse(&report.to_text()).expect("re-parse of a written report");
        assert_eq!(again, report);
    }
});
