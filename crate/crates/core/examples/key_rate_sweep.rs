//! Secret key rate against distance for several modulation errors, with the
//! mean photon number optimized at every point.

use losstol::channel::ChannelParams;
use losstol::keyrate::{sweep, AlphaChoice, OptimizerSettings, DEFAULT_F_EC};

fn main() -> losstol::Result<()> {
    let base = ChannelParams::default();
    let distances: Vec<f64> = (0..=8).map(|k| 20.0 * k as f64).collect();
    let alpha = AlphaChoice::Optimize(OptimizerSettings::default());

    print!("{:>8}", "km");
    let deltas = [0.0, 0.063, 0.126];
    for d in deltas {
        print!("  {:>22}", format!("R (delta={d})"));
    }
    println!();
    let curves = deltas
        .iter()
        .map(|&d| sweep(&distances, d, &base, DEFAULT_F_EC, &alpha))
        .collect::<losstol::Result<Vec<_>>>()?;
    for (i, km) in distances.iter().enumerate() {
        print!("{km:>8.0}");
        for c in &curves {
            print!("  {:>11.4e} @a={:<8.4}", c[i].rate, c[i].alpha_opt);
        }
        println!();
    }
    Ok(())
}
