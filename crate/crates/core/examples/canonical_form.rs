//! Reduces the period matrix to the rotation-like canonical form inside a band
//! and to its hyperbolic continuation inside a gap.

use wgloc::spectrum::{bloch_phase, canonical_reduction, canonical_reduction_gap, BlochPhase};
use wgloc::waveguide::{period_transfer, LayerStack};

fn main() -> wgloc::Result<()> {
    let stack = LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)])?;
    for nu in [3.0, 5.0, 9.0] {
        let m = period_transfer(&stack, nu)?;
        match bloch_phase(&m) {
            BlochPhase::Band { omega } => {
                let r = canonical_reduction(&m, omega)?;
                println!("nu={nu}: band, omega={omega:.6}, residual {:.2e}", r.residual);
                println!("  D = {:?}", r.d);
            }
            BlochPhase::Gap { kappa, trace_sign } => {
                println!("nu={nu}: gap, kappa={kappa:.6} (tr sign {trace_sign})");
                if trace_sign > 0 {
                    let r = canonical_reduction_gap(&m, kappa)?;
                    println!("  residual {:.2e}", r.residual);
                }
            }
        }
    }
    Ok(())
}
