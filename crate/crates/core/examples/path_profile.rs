//! Trace total value along the path from global control to global treatment.

use matchlab::fluid::path_profile;
use matchlab::instances::pedagogical;

fn main() -> matchlab::Result<()> {
    let p = pedagogical();
    let prof = path_profile(&p.instance, &p.panel_a, p.cost(), 13)?;
    println!("{:>6} {:>9} {:>9} {:>9}", "eta", "value", "left", "right");
    for k in 0..prof.eta.len() {
        println!(
            "{:>6.3} {:>9.5} {:>9.5} {:>9.5}",
            prof.eta[k], prof.value[k], prof.left_slope[k], prof.right_slope[k]
        );
    }
    println!("kinks at {:?}", prof.breakpoints);
    println!("slope integral minus value change: {:.2e}", prof.integral_residual);
    Ok(())
}
