//! Pauli decomposition of qubit states and the phase-encoded source.

use std::f64::consts::PI;

use losstol::qstate::{encode_single_photon, pauli_decompose, Basis, BlochVector, QubitState};

fn main() -> losstol::Result<()> {
    for (basis, bit) in [(Basis::Z, 0), (Basis::Z, 1), (Basis::X, 0), (Basis::Y, 1)] {
        let b = pauli_decompose(&QubitState::basis(basis, bit));
        println!(
            "|{bit}{}>  v0={:+.3} px={:+.3} py={:+.3} pz={:+.3}",
            basis.name().to_lowercase(),
            b.v0,
            b.px,
            b.py,
            b.pz
        );
    }

    let mixed = QubitState::from_bloch(&BlochVector::new(-0.3, 0.0, 0.7))?;
    let b = mixed.bloch();
    println!("mixture: radius {:.4}, purity {:.4}", b.radius(), mixed.purity());

    println!("\nphase encoding with modulation error delta = 0.126");
    for theta in [0.0, 0.5 * PI, PI] {
        let b = encode_single_photon(theta, 0.126)?.bloch();
        println!("theta_a = {theta:.4}: px={:+.5} pz={:+.5}", b.px, b.pz);
    }
    Ok(())
}
