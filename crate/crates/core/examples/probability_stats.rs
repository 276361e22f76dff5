//! Mean and variance of generation probability per group, next to the same
//! statistics over random halves of the whole pool.

use memscope::analysis::{group_probability_stats, random_split_stats};
use memscope::classify::{label_traces, MatchMode};
use memscope::corpus::{build_prompts, DatasetKind, DatasetRecord, ExemplarConfig};
use memscope::trace::{synth_traces, SynthScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<DatasetRecord> = (0..200)
        .map(|i| {
            DatasetRecord::completion(
                format!("i{i}"),
                DatasetKind::Idiom,
                format!("many hands make w{i}"),
            )
        })
        .collect();
    let prompts = build_prompts(&records, &ExemplarConfig::defaults())?;
    let (_, traces) = synth_traces(&prompts, &SynthScenario::default(), 0)?;
    let samples = label_traces(&prompts, &traces, MatchMode::Prefix)?.samples;

    let (mem, non) = group_probability_stats(&samples);
    for g in [mem, non] {
        println!(
            "{:<14} n={:<4} mean={:.4} var={:.4}",
            g.group.as_str(),
            g.n,
            g.mean_prob.unwrap_or(f64::NAN),
            g.var_prob.unwrap_or(f64::NAN)
        );
    }
    for row in random_split_stats(&samples, 3, 0)? {
        println!(
            "split {} {:?}: n={} mean={:.4} var={:.4}",
            row.split_index, row.half, row.n, row.mean_prob, row.var_prob
        );
    }
    Ok(())
}
