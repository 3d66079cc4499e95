//! Timing of thinning against the fast tree algorithm on the Yule model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::direct::{simulate_direct, DirectRunConfig, RecordMode};
use crate::error::Result;
use crate::population::Population;
use crate::rng::stream_rng;
use crate::yule::{reconstruct_traits, simulate_fast, yule_model, YuleParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub size: usize,
    pub horizon: f64,
    pub replicas: usize,
    pub wall_clock_s: f64,
    pub events: u64,
    pub events_per_sec: f64,
}

/// Horizon used at initial size `size`: `base · 10 / size`, so that every
/// scale simulates a comparable number of divisions.
pub fn bench_horizon(base: f64, size: usize) -> f64 {
    base * 10.0 / size as f64
}

/// Runs both methods single-threaded at every size, `replicas` times each.
pub fn bench_yule(params: &YuleParams, sizes: &[usize], base_horizon: f64, replicas: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let model = yule_model(params.clone());
    let mut rows = Vec::new();
    for &size in sizes {
        let horizon = bench_horizon(base_horizon, size);
        let z = vec![1.0; size];
        let initial = Population::from_scalars(0.0, &z);

        let start = Instant::now();
        let mut events = 0u64;
        for i in 0..replicas as u64 {
            let cfg = DirectRunConfig::new(horizon, seed).with_stream(i).with_record_mode(RecordMode::TerminalOnly);
            events += simulate_direct(&initial, &model, &cfg)?.n_events as u64;
        }
        rows.push(row("thinning", size, horizon, replicas, start.elapsed().as_secs_f64(), events));

        let start = Instant::now();
        let mut events = 0u64;
        for i in 0..replicas as u64 {
            let mut rng = stream_rng(seed, i);
            let out = simulate_fast(params, &z, horizon, &mut rng)?;
            reconstruct_traits(&out, params, &z, &[horizon])?;
            events += out.event_count() as u64;
        }
        rows.push(row("fast", size, horizon, replicas, start.elapsed().as_secs_f64(), events));
    }
    Ok(rows)
}

fn row(method: &str, size: usize, horizon: f64, replicas: usize, secs: f64, events: u64) -> BenchRow {
    BenchRow {
        method: method.into(),
        size,
        horizon,
        replicas,
        wall_clock_s: secs,
        events,
        events_per_sec: if secs > 0.0 { events as f64 / secs } else { f64::INFINITY },
    }
}

/// Markdown table of the rows.
pub fn markdown_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("| method | size | horizon | replicas | wall-clock (s) | events | events/s |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} | {} | {:.3e} |\n",
            r.method, r.size, r.horizon, r.replicas, r.wall_clock_s, r.events, r.events_per_sec
        ));
    }
    s
}
