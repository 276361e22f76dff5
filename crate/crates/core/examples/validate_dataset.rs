//! Schema checks on a dataset: one good record, one with a single word
//! (no gold can be withheld), and a Q/A record with an empty answer.

use memscope::corpus::{parse_dataset, validate_dataset};

const LINES: &str = r#"{"id":"ok","kind":"idiom","text":"no pain no gain"}
{"id":"short","kind":"idiom","text":"gain"}
{"id":"blank","kind":"popqa","question":"Who?","answer":""}
"#;

fn main() {
    let records = parse_dataset(LINES.as_bytes(), None).expect("well-formed JSON");
    let report = validate_dataset(&records);
    println!("{} records, by kind {:?}", report.total, report.by_kind);
    for v in &report.violations {
        println!("  {}: {}", v.record_id, v.message);
    }
}
