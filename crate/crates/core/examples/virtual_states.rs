//! Virtual states of the modulated source: the closed form against the
//! purification construction, and the resulting single-photon phase error.

use losstol::channel::{single_photon_stats, ChannelParams};
use losstol::estimator::z_pair_ensemble;
use losstol::qstate::{modulation_coefficients, virtual_states_planar, Basis, SourceSet};

fn main() -> losstol::Result<()> {
    for delta in [0.0, 0.063, 0.126, 0.3] {
        let closed = virtual_states_planar(delta)?;
        let sources = SourceSet::modulated_three_state(delta)?;
        let built = z_pair_ensemble(&sources, Basis::X)?;
        let gap = closed
            .entries
            .iter()
            .zip(&built.entries)
            .map(|(a, b)| a.state.distance(&b.state).max((a.weight - b.weight).abs()))
            .fold(0.0, f64::max);
        let c = modulation_coefficients(delta);
        println!(
            "delta {delta:.3}: P(0x) = {:.6}, P(1x) = {:.6}, C = [[{:.4}, {:.4}], [{:.4}, {:.4}]], closed-form gap {gap:.1e}",
            closed.entries[0].weight, closed.entries[1].weight, c[0][0], c[0][1], c[1][0], c[1][1]
        );
    }

    println!("\nsingle-photon phase error at 50 km");
    for delta in [0.0, 0.063, 0.126] {
        let p = ChannelParams::default().with_delta(delta).with_distance(50.0);
        let (q_z1, e_x1) = single_photon_stats(&p)?;
        println!("delta {delta:.3}: Q_z1 = {q_z1:.4e}, e_x1 = {e_x1:.4e}");
    }
    Ok(())
}
