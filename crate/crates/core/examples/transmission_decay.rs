//! Transmission through N disordered periods and the decay rate read off a
//! window of `−ln|t_N|`.

use wgloc::disorder::{DisorderSpec, PeriodSampler};
use wgloc::lyapunov::{gamma_from_transmission, lyapunov_mc, transmission_trajectory, Window};
use wgloc::rng;
use wgloc::waveguide::LayerStack;

fn main() -> wgloc::Result<()> {
    let stack = LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)])?;
    let spec = DisorderSpec::thickness(stack, 0.05)?;
    let nu = 9.0;

    let sampler = PeriodSampler::new(&spec, nu)?;
    let path = transmission_trajectory(&sampler, nu, 1000, &mut rng::stream(5, 0))?;
    for k in [10, 100, 500, 1000] {
        println!("N={k:<5} -ln|t_N| = {:.4}", path[k - 1]);
    }

    let t = gamma_from_transmission(&spec, nu, 1000, Window { lo: 500, hi: 1000 }, 200, 5)?;
    let m = lyapunov_mc(&spec, nu, 1000, 200, 5)?;
    println!("transmission gamma {:.4e} ± {:.1e}", t.gamma, t.std_err);
    println!("product gamma      {:.4e} ± {:.1e}", m.gamma, m.std_err);
    Ok(())
}
