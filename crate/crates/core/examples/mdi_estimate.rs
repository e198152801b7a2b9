//! Measurement-device-independent variant: both parties send three states to
//! an untrusted relay that announces `phi+` outcomes. The relay here is a
//! Bell measurement with white noise of visibility `v`, for which the phase
//! error rate is `(1 - v) / 2`.

use losstol::estimator::{mdi_phase_error, mdi_prefactor, mdi_solve, z_pair_ensemble, MdiYieldTable};
use losstol::qstate::{Basis, BlochVector, SourceSet};

/// `Tr(D rho_a (x) rho_b)` for `D = v |phi+><phi+| + (1 - v) I / 4`.
fn phi_plus_yield(v: f64, a: &BlochVector, b: &BlochVector) -> f64 {
    0.25 * (1.0 + v * (a.px * b.px - a.py * b.py + a.pz * b.pz))
}

fn main() -> losstol::Result<()> {
    let sources = SourceSet::ideal_three_state();
    let gamma = 0.5;
    let ensemble = z_pair_ensemble(&sources, Basis::X)?;
    for v in [1.0, 0.95, 0.8, 0.0] {
        let mut table = MdiYieldTable::new();
        for a in sources.states() {
            for b in sources.states() {
                let y = phi_plus_yield(v, &a.state.bloch(), &b.state.bloch());
                table.insert(&a.label, &b.label, mdi_prefactor(&a.label, &b.label, gamma) * y)?;
            }
        }
        let f = mdi_solve(&table, &sources, &sources, gamma)?;
        let e_x = mdi_phase_error(&f, &ensemble, &ensemble)?;
        println!(
            "visibility {v:.2}: e_x = {e_x:.6} (expected {:.6})",
            0.5 * (1.0 - v)
        );
    }
    Ok(())
}
