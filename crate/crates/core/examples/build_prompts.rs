//! Builds few-shot prompts for every record in the bundled fixture and writes
//! them in the JSONL layout the trace extractor reads.

use memscope::corpus::{build_prompts, read_dataset_file, write_prompts, ExemplarConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/all_kinds.jsonl"
    );
    let records = read_dataset_file(path, None)?;
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;

    for spec in prompts
        .iter()
        .filter(|p| p.sample_id.starts_with("pn") || p.sample_id.ends_with("#child_q"))
        .take(2)
    {
        println!(
            "--- {} (gold {:?}, {} new tokens)",
            spec.sample_id, spec.gold, spec.max_new_tokens
        );
        println!("{}", spec.prompt);
    }

    let out = std::env::temp_dir().join("memscope_prompts.jsonl");
    write_prompts(&out, &prompts)?;
    println!(
        "{} records -> {} prompts in {}",
        records.len(),
        prompts.len(),
        out.display()
    );
    Ok(())
}
