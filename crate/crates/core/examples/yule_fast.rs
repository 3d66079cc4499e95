//! The fast tree algorithm for the spine process of the Yule model.
//!
//! Division times and indices come from a rate-one Yule tree, labels are
//! reconstructed from the division indices, and masses are filled in
//! afterwards. Writes the genealogy as CSV to standard output.
//!
//! ```bash
//! cargo run --release --example yule_fast > tree.csv
//! ```

use spinal::rng::stream_rng;
use spinal::yule::{fast_summaries, simulate_fast, summarize, YuleParams};

fn main() -> spinal::Result<()> {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0))?;
    let z = [1.0, 1.0, 1.0];

    let mut rng = stream_rng(3, 0);
    let out = simulate_fast(&params, &z, 1.0, &mut rng)?;
    let summary = summarize(&out, &params, &z)?;
    eprintln!(
        "{} divisions, {} losses outside the spine, {} spine losses",
        out.division_count(),
        out.t_loss.len(),
        out.t_loss_star.len()
    );
    eprintln!(
        "spine {} with mass {:.4} after {} divisions",
        summary.spine_label, summary.spine_mass, summary.spine_division_depth
    );
    eprintln!("alive: {}", out.u.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "));
    spinal::yule::fast::write_tree_csv(&out, std::io::stdout())?;

    let runs = fast_summaries(&params, &z, 1.0, 10_000, 9, 0)?;
    let mean_div = runs.iter().map(|s| s.division_count as f64).sum::<f64>() / runs.len() as f64;
    eprintln!("mean division count over {} runs: {mean_div:.4} (rate-one Yule: {:.4})", runs.len(), 3.0 * (1f64.exp() - 1.0));
    Ok(())
}
