//! White-noise limit: stationary phase density, the quadrature for γ and a
//! direct simulation of the amplitude–phase SDE.

use wgloc::whitenoise::{gamma_quadrature, reduced_gamma, simulate_gamma_sde, stationary_density, SdeParams};

fn main() -> wgloc::Result<()> {
    let p = stationary_density(1.0)?;
    println!("lambda=1: C={:.6}, mass {:?}", p.c, p.total_mass());
    for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("  p({z:+}) = {:.5}", p.pdf(z));
    }

    println!("{:>9} {:>12} {:>12} {:>10}", "lambda", "quadrature", "sde", "err");
    for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let params = SdeParams::for_lambda(lambda, 0.01, 2000.0)?;
        let q = gamma_quadrature(params.omega, params.sigma)?;
        let s = simulate_gamma_sde(&params, 32, 9)?;
        println!("{lambda:>9} {:>12.5e} {:>12.5e} {:>10.1e}", q.gamma, s.gamma, s.std_err);
    }

    for lambda in [1e-4, 1e4] {
        println!("reduced gamma({lambda:e}) = {:.6e}", reduced_gamma(lambda)?);
    }
    Ok(())
}
