//! Runs the synthetic benchmark and prints its report as JSON.
//!
//! Usage: `cargo run --release --example bench [config.json]`

use std::time::Instant;

use langgate::bench::{run_benchmark, run_switch_benchmark, BenchConfig};

fn main() -> langgate::Result<()> {
    let mut cfg: BenchConfig = match std::env::args().nth(1) {
        Some(path) => langgate::io::read_json(path.as_ref())?,
        None => BenchConfig::default(),
    };
    let t = Instant::now();
    let run = run_benchmark(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&run.report)?);
    cfg.synth.switch_rate = 0.1;
    let sw = run_switch_benchmark(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&sw)?);
    eprintln!("{:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
