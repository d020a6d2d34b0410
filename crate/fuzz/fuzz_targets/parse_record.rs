#![no_main]
use dama_core::experiment::{compare, ResultRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(record) = ResultRecord::from_json_str(text) {
        let _ = record.csv_row(0.0);
        let _ = compare(std::slice::from_ref(&record));
        if let Ok(json) = record.to_json() {
            let _ = ResultRecord::from_json_str(&json);
        }
    }
});
