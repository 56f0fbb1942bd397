//! log γ against log σ at a band edge and mid-band, with fitted slopes.
//!
//!     cargo run --release --example figure4_scaling [realizations]

use wgloc::scaling::{figure4_experiment, Figure4Config};

fn main() -> wgloc::Result<()> {
    let realizations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let config = Figure4Config { realizations, ..Figure4Config::default() };
    let result = figure4_experiment(&config)?;

    for (p, fit) in config.points.iter().zip(&result.fits) {
        println!(
            "{} (nu={}): slope {:.3} ± {:.3}, intercept {:.3} ± {:.3}, R² {:.4}",
            p.label, p.omega, fit.slope, fit.slope_err, fit.intercept, fit.intercept_err, fit.r_squared
        );
    }
    for c in &result.checks {
        println!("{}", c.line());
    }
    Ok(())
}
