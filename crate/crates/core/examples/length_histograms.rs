//! Non-memorized ratio by context length and by predicted length, plus the
//! bar chart written by the analyze command.

use memscope::analysis::{length_histogram, LengthAxis};
use memscope::classify::{label_traces, MatchMode};
use memscope::corpus::{build_prompts, DatasetKind, DatasetRecord, ExemplarConfig};
use memscope::plot::length_ratio_bars;
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = (0..60)
        .map(|i| {
            let lead = "far ".repeat(i % 5 + 1);
            DatasetRecord::completion(
                format!("i{i}"),
                DatasetKind::Idiom,
                format!("{lead}and {}", "x".repeat(i % 3 + 1)),
            )
        })
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;
    let (_, traces) = synth_traces(&prompts, &SynthScenario::default(), 2)?;
    let samples = label_traces(&prompts, &traces, MatchMode::Prefix)?.samples;

    let mut hists = Vec::new();
    for axis in [LengthAxis::ContextWords, LengthAxis::PredictedChars] {
        let h = length_histogram(&samples, axis)?;
        println!("{}:", axis.as_str());
        for b in &h.bins {
            println!(
                "  {:>3}  mem={:<3} non={:<3} ratio={:.2}",
                b.value, b.memorized_count, b.non_memorized_count, b.non_memorized_ratio
            );
        }
        hists.push(h);
    }
    let path = std::env::temp_dir().join("memscope_length.svg");
    std::fs::write(
        &path,
        length_ratio_bars("non-memorized ratio by length", &hists),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
