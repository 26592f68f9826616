//! Draw seeded experiment states and a coupled pair of global markets.

use matchlab::instances::{default_rates, gen_geometric, GeometricSpec};
use matchlab::market::{sample_global_pair, sample_state, ExperimentConfig};
use matchlab::rng::StreamKey;

fn main() -> matchlab::Result<()> {
    let g = gen_geometric(GeometricSpec { n_d: 3, n_s: 4, seed: 7, index: 0 })?;
    let rates = default_rates(&g.instance, 1.0)?;
    let cfg = ExperimentConfig::new(0.3, 1.0)?;
    for rep in 0..3 {
        let key = StreamKey::new(7, 0, rep);
        let s = sample_state(&rates, &cfg, key);
        let pair = sample_global_pair(&rates, cfg.tau, key);
        println!("replication {rep}");
        println!("  control {:?}  treated {:?}", s.control, s.treated);
        println!("  supply  {:?}", s.supply);
        println!("  all-control demand {:?}  all-treated demand {:?}", pair.control_demand, pair.treated_demand);
    }
    // Same key, same draw.
    assert_eq!(
        sample_state(&rates, &cfg, StreamKey::new(7, 0, 1)),
        sample_state(&rates, &cfg, StreamKey::new(7, 0, 1))
    );
    Ok(())
}
