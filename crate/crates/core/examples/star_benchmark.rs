//! Runs DP-RFS and the pooled-point DP-GMM on the star benchmark for a few
//! seeds and prints the K mode and recovered rates.
//!
//!     cargo run --release -p dprfs --example star_benchmark -- [seeds] [sweeps] [no-dpgmm]
//!
//! `STAR_N`, `STAR_CENTER_VARIANCE` and `STAR_FIRST_SEED` override the
//! generator defaults.

use std::time::Instant;

use dprfs::baselines::{fit_dpgmm_collapsed, pool_patterns, DpGmmHyper};
use dprfs::eval::{partition_matching, rate_report};
use dprfs::sampler::{run_chain, summarize, ChainConfig, Hyperparams, DEFAULT_DEGENERATE_FACTOR};
use dprfs::synth::{generate_star, StarConfig, DEFAULT_CENTER_VARIANCE, DEFAULT_CORNER_OFFSET};

fn main() -> dprfs::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let sweeps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(550);
    let with_dpgmm = args.next().is_none_or(|s| s != "no-dpgmm");
    let env = |key: &str| std::env::var(key).ok().and_then(|s| s.parse::<f64>().ok());
    let first = env("STAR_FIRST_SEED").unwrap_or(0.0) as u64;
    for seed in first..first + seeds {
        let defaults = StarConfig::default();
        let config = StarConfig::star(
            DEFAULT_CORNER_OFFSET,
            env("STAR_CENTER_VARIANCE").unwrap_or(DEFAULT_CENTER_VARIANCE),
            env("STAR_N").map_or(defaults.num_observations, |n| n as usize),
            seed,
        );
        let (data, labels) = generate_star(&config)?;
        let hyper = Hyperparams::from_data(&data)?;
        let chain = ChainConfig {
            num_sweeps: sweeps,
            burn_in: Some(sweeps / 11),
            seed,
            ..ChainConfig::default()
        };
        let start = Instant::now();
        let trace = run_chain(&data, &hyper, &chain)?;
        let elapsed = start.elapsed();
        let summary = summarize(&trace, &data, &hyper, DEFAULT_DEGENERATE_FACTOR)?;
        let last = trace.last().expect("records");
        let matching = partition_matching(&last.assignments, &labels)?;
        let report = rate_report(&summary, &config, &matching)?;
        let early: Vec<usize> = trace.records.iter().take(12).map(|r| r.k).collect();
        println!(
            "seed {seed}: dprfs K mode {} final {} acc {:.3} eta {:.3} ({:.1?}) early {:?}",
            summary.k_mode, summary.final_k, matching.accuracy, last.concentration, elapsed, early
        );
        for row in &report.components {
            println!("   comp {} true {} est {:?}", row.component, row.true_rate, row.estimated_rate);
        }
        for c in &summary.clusters {
            println!(
                "   cluster {} n={} pts={} rate={:.3?} loc=({:.2},{:.2}) degenerate={}",
                c.label, c.member_count, c.total_points, c.mean_rate, c.mean_location[0], c.mean_location[1], c.degenerate
            );
        }
        if with_dpgmm {
            let points = pool_patterns(&data);
            let gh = DpGmmHyper::from_points(&points)?;
            let start = Instant::now();
            let gtrace = fit_dpgmm_collapsed(&points, &gh, &chain)?;
            println!(
                "   dpgmm K mode {:?} final {} ({:.1?})",
                gtrace.k_mode(),
                gtrace.last().unwrap().k,
                start.elapsed()
            );
        }
    }
    Ok(())
}
