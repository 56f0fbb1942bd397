//! Bands and gaps of a two-layer period, with the closed-form discriminant.
//!
//!     cargo run --release --example band_structure

use wgloc::spectrum::{discriminant, scan_bands, TwoLayerTrace};
use wgloc::waveguide::LayerStack;

fn main() -> wgloc::Result<()> {
    let stack = LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)])?;
    let bs = scan_bands(&stack, 0.01, 12.0, 20_000)?;

    println!("{:>10} {:>10}  kind", "lo", "hi");
    for (lo, hi, is_band) in bs.intervals() {
        println!("{lo:>10.5} {hi:>10.5}  {}", if is_band { "band" } else { "gap" });
    }

    let closed = TwoLayerTrace::from_stack(&stack)?;
    for nu in [5.0, 9.0] {
        let t = discriminant(&stack, nu)?;
        println!("tr M({nu}) = {t:+.6}  closed form {:+.6}  envelope {:.4}", closed.eval(nu), closed.envelope());
    }
    Ok(())
}
