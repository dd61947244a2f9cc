//! Fixtures shared by the benchmarks.

use relaylab::{named_instance, ChannelInstance, NamedMatrix};

/// The six reference combinations at the given equal relay power.
pub fn reference_instances(p_r: f64) -> Vec<(String, ChannelInstance)> {
    let mut out = Vec::new();
    for g in NamedMatrix::ALL {
        for h in [NamedMatrix::Ortho, NamedMatrix::Parallel] {
            let inst = named_instance(g, h, 10.0, p_r, p_r).expect("reference instance");
            out.push((format!("{g}-{h}"), inst));
        }
    }
    out
}
