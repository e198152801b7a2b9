//! Simulates the protocol pulse by pulse, estimates the phase error from the
//! observed counts and compares it with the analytic single-photon value.

use losstol::channel::{single_photon_stats, ChannelParams};
use losstol::montecarlo::{estimate_from_trial, model_setup, run_protocol, Click, TrialRecord};
use losstol::qstate::Basis;

fn main() -> losstol::Result<()> {
    let n = 4_000_000;
    for (delta, km) in [(0.0, 0.0), (0.126, 0.0), (0.126, 50.0)] {
        let p = ChannelParams::default().with_delta(delta).with_distance(km);
        let m = model_setup(&p)?;
        let t = run_protocol(n, &m.sources, &m.channel, &m.povm, &m.bases, 42)?;
        let est = estimate_from_trial(&t, &m.sources, Basis::X)?;
        let (_, analytic) = single_photon_stats(&p)?;
        println!(
            "delta {delta:.3}, {km:>4} km: e_x = {:.3e} +/- {:.1e}, analytic {analytic:.3e}, z = {:+.2}",
            est.e_x,
            est.std_err,
            (est.e_x - analytic) / est.std_err
        );
    }

    let p = ChannelParams::default().with_delta(0.126);
    let m = model_setup(&p)?;
    let t = run_protocol(100_000, &m.sources, &m.channel, &m.povm, &m.bases, 7)?;
    let mut csv = Vec::new();
    t.write_csv(&mut csv).expect("write to memory");
    let back = TrialRecord::read_csv(csv.as_slice())?;
    assert_eq!(back, t);
    println!(
        "\ncounts file round trip ok; 1x measured in X: {} zeros, {} ones, {} no click",
        t.count("1x", Basis::X, Click::Zero),
        t.count("1x", Basis::X, Click::One),
        t.count("1x", Basis::X, Click::Fail)
    );
    Ok(())
}
