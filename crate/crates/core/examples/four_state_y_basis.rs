//! With a fourth source state off the X-Z plane the full Bloch functional is
//! solved, so phase errors in both the X and Y bases are available.

use losstol::estimator::estimate_phase_error;
use losstol::montecarlo::{exact_yields, BasisChoice, BobPovm, KrausChannel};
use losstol::qstate::{Basis, Mat2, Pauli, SourceSet, C64};

fn scaled(m: Mat2, s: f64) -> Mat2 {
    m * C64::new(s, 0.0)
}

fn main() -> losstol::Result<()> {
    let sources = SourceSet::ideal_four_state();
    let bases = BasisChoice::uniform(&[Basis::X, Basis::Y, Basis::Z])?;
    let povm = BobPovm::ideal(&[Basis::X, Basis::Y, Basis::Z])?;

    // transmittance 0.2 with 3% bit flips and 1% phase flips
    let (eta, px, pz) = (0.2f64, 0.03f64, 0.01f64);
    let ch = KrausChannel::new(vec![
        scaled(Pauli::Id.matrix(), (eta * (1.0 - px - pz)).sqrt()),
        scaled(Pauli::X.matrix(), (eta * px).sqrt()),
        scaled(Pauli::Z.matrix(), (eta * pz).sqrt()),
    ])?;
    let table = exact_yields(&sources, &ch, &povm, &bases)?;

    for basis in [Basis::X, Basis::Y] {
        let est = estimate_phase_error(&table, &sources, basis)?;
        let q = est.functionals[0].coefficients();
        println!(
            "{basis} basis: e = {:.6}, q(outcome 0) = [{:.4}, {:.4}, {:.4}, {:.4}]",
            est.error_rate, q[0], q[1], q[2], q[3]
        );
    }
    // Projecting the ancilla onto |j_y> hands Bob the conjugate state, so a
    // noiseless Y test reads 1 and the Y error rate appears as 1 - e.
    println!("expected: e_x = {pz}, e_y = 1 - {}", px + pz);
    Ok(())
}
