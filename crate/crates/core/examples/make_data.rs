//! Writes the synthetic data set used by the CLI defaults.
//!
//! `cargo run -p congen --example make_data -- [dir] [rows] [seed]`

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let rows = args.next().map_or(200, |s| s.parse().expect("rows must be an integer"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    congen::mock::write_data_dir(&dir, rows, seed)?;
    println!("wrote {rows} rows to {}", dir.display());
    Ok(())
}
