//! Accuracy against mean generation probability across several model runs.

use memscope::analysis::{accuracy_probability_summary, model_averages, RunSamples};
use memscope::classify::{label_traces, MatchMode};
use memscope::corpus::{build_prompts, DatasetKind, DatasetRecord, ExemplarConfig};
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = (0..50)
        .map(|i| {
            DatasetRecord::qa(
                format!("q{i}"),
                DatasetKind::LamaUhn,
                format!("Born in [MASK] {i}."),
                format!("town{i}"),
            )
        })
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;

    let mut runs = Vec::new();
    for (model, fraction, seed) in [("small", 0.3, 1), ("medium", 0.5, 2), ("large", 0.7, 3)] {
        let scenario = SynthScenario {
            model_id: model.into(),
            dataset_id: "lama_uhn".into(),
            fraction_correct: fraction,
            ..Default::default()
        };
        let (_, traces) = synth_traces(&prompts, &scenario, seed)?;
        let samples = label_traces(&prompts, &traces, MatchMode::Prefix)?.samples;
        runs.push(RunSamples {
            model_id: model.into(),
            dataset_id: "lama_uhn".into(),
            samples,
        });
    }
    let rows = accuracy_probability_summary(&runs)?;
    for r in &rows {
        println!(
            "{:<7} {:<9} n={} acc={:.3} mean_prob={:.3}",
            r.model_id, r.dataset_id, r.n, r.accuracy, r.mean_prob_all
        );
    }
    for (model, acc, prob) in model_averages(&rows) {
        println!("{model}: average acc {acc:.3}, prob {prob:.3}");
    }
    Ok(())
}
