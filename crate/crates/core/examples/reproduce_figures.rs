//! Write the data behind every figure into a temporary directory.

use matchlab::harness::{reproduce_figures, FIGURE_KEYS};

fn main() -> matchlab::Result<()> {
    let dir = std::env::temp_dir().join("matchlab-figures-example");
    let which = std::env::args().nth(1).unwrap_or_else(|| "fig2".into());
    println!("keys: {}", FIGURE_KEYS.join(", "));
    for f in reproduce_figures(&which, &dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
