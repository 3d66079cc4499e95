//! Thinning against the fast tree algorithm on the Yule model.
//!
//! Prints a markdown table of wall-clock times and events per second at
//! initial population sizes 10, 100 and 1000.
//!
//! ```bash
//! cargo run --release --example bench
//! ```

use spinal::cli::bench::{bench_yule, markdown_table};
use spinal::yule::YuleParams;

fn main() -> spinal::Result<()> {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0))?;
    let rows = bench_yule(&params, &[10, 100, 1000], 1.0, 20, 1)?;
    print!("{}", markdown_table(&rows));
    Ok(())
}
