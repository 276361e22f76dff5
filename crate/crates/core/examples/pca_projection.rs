//! Projects mean hidden representations onto two principal components and
//! draws the scatter colored by group.

use memscope::analysis::pca_project;
use memscope::classify::{label_traces, MatchMode};
use memscope::corpus::{build_prompts, DatasetKind, DatasetRecord, ExemplarConfig};
use memscope::plot::pca_scatter;
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = (0..120)
        .map(|i| {
            DatasetRecord::completion(
                format!("t{i}"),
                DatasetKind::Terminology,
                format!("Acute Term{i} Syndrome"),
            )
        })
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;
    let (_, traces) = synth_traces(
        &prompts,
        &SynthScenario {
            hidden_dim: 24,
            ..Default::default()
        },
        5,
    )?;
    let samples = label_traces(&prompts, &traces, MatchMode::Prefix)?.samples;

    let reps: Vec<Vec<f64>> = samples.iter().map(|s| s.mean_rep.clone()).collect();
    let pca = pca_project(&reps, 2)?;
    println!(
        "explained variance ratio: {:.3?}",
        pca.explained_variance_ratio
    );
    let flags: Vec<bool> = samples.iter().map(|s| s.memorized).collect();
    for (group, want) in [("memorized", true), ("non-memorized", false)] {
        let pc1: Vec<f64> = pca
            .projections
            .iter()
            .zip(&flags)
            .filter(|(_, &m)| m == want)
            .map(|(p, _)| p[0])
            .collect();
        println!(
            "{group}: mean PC1 {:.3}",
            pc1.iter().sum::<f64>() / pc1.len() as f64
        );
    }
    let path = std::env::temp_dir().join("memscope_pca.svg");
    std::fs::write(
        &path,
        pca_scatter("mean representations", &pca.projections, &flags),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
