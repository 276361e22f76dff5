//! Compares the representation of a generated parent name with the
//! representations of the parent and child names seen in context.

use memscope::analysis::reversal_similarity_analysis;
use memscope::classify::{label_traces, MatchMode};
use memscope::corpus::{build_prompts, DatasetRecord, Direction, ExemplarConfig, ParentRelation};
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = (0..40)
        .map(|i| {
            DatasetRecord::celebrity(
                format!("c{i}"),
                format!("Kid{i} Lane"),
                format!("Mom{i} Lane"),
                ParentRelation::Mother,
            )
        })
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;
    let (_, traces) = synth_traces(&prompts, &SynthScenario::default(), 8)?;
    let samples = label_traces(&prompts, &traces, MatchMode::Prefix)?.samples;

    let of = |d: Direction| {
        samples
            .iter()
            .filter(|s| s.direction == Some(d))
            .cloned()
            .collect::<Vec<_>>()
    };
    let analysis = reversal_similarity_analysis(&of(Direction::ParentQ), &of(Direction::ChildQ))?;
    let s = &analysis.summary;
    println!("{} pairs, {} skipped", s.n_pairs, analysis.skipped.len());
    println!(
        "same concept:  mean {:.3} median {:.3}",
        s.same_concept.mean, s.same_concept.median
    );
    println!(
        "cross concept: mean {:.3} median {:.3}",
        s.cross_concept.mean, s.cross_concept.median
    );
    println!("mean difference {:.3}", s.mean_difference);
    Ok(())
}
