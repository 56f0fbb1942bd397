//! Lyapunov exponent of random period products inside a band and in a gap,
//! plus invariance under a fixed change of basis.

use wgloc::disorder::DisorderSpec;
use wgloc::lyapunov::{conjugation_invariance_check, lyapunov_mc};
use wgloc::waveguide::LayerStack;
use wgloc::Mat2;

fn main() -> wgloc::Result<()> {
    let stack = LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)])?;
    for sigma in [0.003, 0.01, 0.03, 0.1] {
        let spec = DisorderSpec::thickness(stack.clone(), sigma)?;
        let band = lyapunov_mc(&spec, 9.0, 2000, 200, 1)?;
        let gap = lyapunov_mc(&spec, 5.0, 2000, 50, 1)?;
        println!(
            "sigma={sigma:<6} band gamma={:.4e} ± {:.1e}   gap gamma={:.6}",
            band.gamma, band.std_err, gap.gamma
        );
    }

    let spec = DisorderSpec::thickness(stack, 0.05)?;
    let d = Mat2::new(2.0, 1.0, 0.5, 3.0);
    let c = conjugation_invariance_check(&spec, 9.0, &d, 2000, 100, 3)?;
    println!(
        "conjugated: {:.5e} vs {:.5e}, max paired diff {:.2e} (bound {:.2e})",
        c.plain.gamma, c.conjugated.gamma, c.max_paired_diff, c.bound
    );
    Ok(())
}
