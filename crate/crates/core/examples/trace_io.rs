//! Writes synthetic traces to disk and streams them back one sample at a time.

use memscope::corpus::{build_prompts, DatasetKind, DatasetRecord, ExemplarConfig};
use memscope::trace::{read_traces, synth_traces, write_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = ["actions speak louder than words", "better late than never"]
        .iter()
        .enumerate()
        .map(|(i, t)| DatasetRecord::completion(format!("i{i}"), DatasetKind::Idiom, *t))
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;
    let (header, samples) = synth_traces(
        &prompts,
        &SynthScenario {
            hidden_dim: 4,
            ..Default::default()
        },
        9,
    )?;

    let path = std::env::temp_dir().join("memscope_traces.jsonl");
    write_traces(&header, &samples, &path)?;
    println!(
        "{}",
        std::fs::read_to_string(&path)?
            .lines()
            .next()
            .unwrap_or_default()
    );

    let (header, reader) = read_traces(&path)?;
    println!(
        "model {} / dataset {}, hidden dim {}",
        header.model_id, header.dataset_id, header.hidden_dim
    );
    for sample in reader {
        let sample = sample?;
        let step = &sample.steps[0];
        println!(
            "{}: {:?} p={:.3} rep[0]={:.3}",
            sample.sample_id, sample.generated_text, step.prob, step.rep[0]
        );
    }
    Ok(())
}
