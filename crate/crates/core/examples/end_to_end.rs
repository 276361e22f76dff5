//! The full pipeline through the same entry points the CLI uses: dataset on
//! disk, prompts, synthetic traces standing in for a model, then every
//! analysis written to an output directory.

use memscope::classify::MatchMode;
use memscope::corpus::{
    read_prompts, record_to_json_line, DatasetKind, DatasetRecord, ParentRelation,
};
use memscope::report::{cmd_prompts, cmd_report_all, RunConfig, DEFAULT_REPEATS};
use memscope::trace::{synth_traces, write_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("memscope_end_to_end");
    std::fs::create_dir_all(&dir)?;
    let records: Vec<DatasetRecord> = (0..150)
        .map(|i| {
            DatasetRecord::celebrity(
                format!("c{i}"),
                format!("Kid{i} Stone"),
                format!("Mom{i} Stone"),
                ParentRelation::Mother,
            )
        })
        .collect();
    let dataset = dir.join("celebrity.jsonl");
    std::fs::write(
        &dataset,
        records
            .iter()
            .map(|r| record_to_json_line(r) + "\n")
            .collect::<String>(),
    )?;

    let mut config = RunConfig {
        dataset: Some(dataset),
        kind: Some(DatasetKind::CelebrityParent),
        exemplars: None,
        traces: vec![dir.join("traces.jsonl")],
        context_traces: Some(dir.join("context_traces.jsonl")),
        mode: MatchMode::Prefix,
        out: dir.join("out"),
        seed: 0,
        n_repeats: DEFAULT_REPEATS,
    };
    cmd_prompts(&config)?;

    let scenario = SynthScenario {
        model_id: "synthetic-7b".into(),
        dataset_id: "celebrity_parent".into(),
        ..Default::default()
    };
    let prompts = read_prompts(config.out.join("prompts.jsonl"))?;
    let (header, traces) = synth_traces(&prompts, &scenario, 42)?;
    write_traces(&header, &traces, &config.traces[0])?;
    let ctx_prompts = read_prompts(config.out.join("prompts_context.jsonl"))?;
    debug_assert_eq!(ctx_prompts.len(), records.len());
    let (header, traces) = synth_traces(
        &ctx_prompts,
        &SynthScenario {
            fraction_correct: 0.4,
            ..scenario
        },
        43,
    )?;
    write_traces(&header, &traces, config.context_traces.as_ref().unwrap())?;

    config.out = dir.join("report");
    for path in cmd_report_all(&config)? {
        println!("{}", path.display());
    }
    Ok(())
}
