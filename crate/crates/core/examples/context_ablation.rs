//! Child-question accuracy with and without the parent question answered
//! first in the prompt.

use memscope::analysis::{context_ablation_report, AblationTable};
use memscope::classify::{label_traces, MatchMode};
use memscope::corpus::{
    build_contextual_child_prompt, build_prompts, DatasetKind, DatasetRecord, Direction,
    ExemplarConfig, ParentRelation,
};
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = (0..100)
        .map(|i| {
            DatasetRecord::celebrity(
                format!("c{i}"),
                format!("Kid{i} Hill"),
                format!("Dad{i} Hill"),
                ParentRelation::Father,
            )
        })
        .collect();
    let config = ExemplarConfig::defaults();
    let prompts = build_prompts(&records, &config)?;
    let set = config.set_for(DatasetKind::CelebrityParent);
    let ctx_prompts = records
        .iter()
        .map(|r| build_contextual_child_prompt(r, &set))
        .collect::<Result<Vec<_>, _>>()?;
    println!("contextual prompt tail:\n{}\n", ctx_prompts[0].query);

    let (_, plain) = synth_traces(
        &prompts,
        &SynthScenario {
            fraction_correct: 0.3,
            ..Default::default()
        },
        1,
    )?;
    let (_, ctx) = synth_traces(
        &ctx_prompts,
        &SynthScenario {
            fraction_correct: 0.45,
            ..Default::default()
        },
        2,
    )?;
    let plain = label_traces(&prompts, &plain, MatchMode::Prefix)?.samples;
    let ctx = label_traces(&ctx_prompts, &ctx, MatchMode::Prefix)?.samples;

    let of = |d: Direction| {
        plain
            .iter()
            .filter(|s| s.direction == Some(d))
            .cloned()
            .collect::<Vec<_>>()
    };
    let t = context_ablation_report(&ctx, &of(Direction::ChildQ), &of(Direction::ParentQ))?;
    println!(
        "parent {:.3} | child with context {:.3} | child without {:.3}",
        t.parent_ratio, t.child_with_context_ratio, t.child_without_context_ratio
    );

    // The same arithmetic on fixed counts.
    let t = AblationTable::from_counts(1513, 755, 673, 248)?;
    println!(
        "1513 records: {:.3} / {:.3} / {:.3}",
        t.parent_ratio, t.child_with_context_ratio, t.child_without_context_ratio
    );
    Ok(())
}
