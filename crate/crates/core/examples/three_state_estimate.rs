//! Phase error rate from the detection yields of three states only.
//!
//! The yields come from a lossy channel followed by a phase flip. The estimate
//! from `|0z>, |1z>, |0x>` matches the rate an ideal X-basis test would see.

use losstol::estimator::{estimate_phase_error, YieldMode, YieldTable};
use losstol::montecarlo::{exact_yields, BasisChoice, BobPovm, KrausChannel};
use losstol::qstate::{Basis, Mat2, Pauli, SourceSet, C64};

fn scaled(m: Mat2, s: f64) -> Mat2 {
    m * C64::new(s, 0.0)
}

fn main() -> losstol::Result<()> {
    let sources = SourceSet::ideal_three_state();
    let bases = BasisChoice::uniform(&[Basis::X, Basis::Z])?;
    let povm = BobPovm::ideal(&[Basis::X, Basis::Z])?;

    for flip in [0.0f64, 0.02, 0.05, 0.11] {
        let ch = KrausChannel::new(vec![
            scaled(Pauli::Id.matrix(), (0.3 * (1.0 - flip)).sqrt()),
            scaled(Pauli::Z.matrix(), (0.3 * flip).sqrt()),
        ])?;
        let table = exact_yields(&sources, &ch, &povm, &bases)?;
        let est = estimate_phase_error(&table, &sources, Basis::X)?;
        println!(
            "phase flip {flip:.2}: e_x = {:.6}  (condition number {:.2})",
            est.error_rate, est.condition_number
        );
    }

    let mut manual = YieldTable::new(YieldMode::Conditional);
    for (label, y0, y1) in [("0z", 0.05, 0.05), ("1z", 0.05, 0.05), ("0x", 0.095, 0.005)] {
        manual.set_prior(label, Basis::X, 1.0 / 6.0)?;
        manual.insert(label, Basis::X, 0, y0)?;
        manual.insert(label, Basis::X, 1, y1)?;
    }
    let est = estimate_phase_error(&manual, &sources, Basis::X)?;
    println!("hand-written yields: e_x = {:.6}", est.error_rate);
    Ok(())
}
