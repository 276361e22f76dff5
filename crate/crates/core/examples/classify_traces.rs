//! Exact-match labeling: the two match modes on a few generations, then a
//! whole synthetic run split into memorized and non-memorized samples.

use memscope::classify::{exact_match, label_traces, partition, MatchMode};
use memscope::corpus::{build_prompts, DatasetKind, DatasetRecord, ExemplarConfig};
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for generated in [
        "Canberra.",
        "Canberra is the capital",
        "Canberran",
        "Sydney",
    ] {
        println!(
            "{generated:>24}  prefix={:<5}  strict={}",
            exact_match(generated, "Canberra", &[], MatchMode::Prefix),
            exact_match(generated, "Canberra", &[], MatchMode::Strict),
        );
    }

    let records: Vec<DatasetRecord> = (0..20)
        .map(|i| {
            DatasetRecord::qa(
                format!("q{i}"),
                DatasetKind::Popqa,
                format!("What is item {i}?"),
                format!("answer{i}"),
            )
        })
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;
    let (_, traces) = synth_traces(
        &prompts,
        &SynthScenario {
            fraction_correct: 0.35,
            ..Default::default()
        },
        4,
    )?;
    let run = label_traces(&prompts, &traces, MatchMode::Prefix)?;
    let (mem, non) = partition(&run.samples);
    println!("memorized {} / non-memorized {}", mem.len(), non.len());
    Ok(())
}
