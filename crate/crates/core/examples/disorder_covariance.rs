//! The perturbation `V` of one disordered period: mean, empirical covariance and
//! the deterministic covariance `B` of the index-noise model.

use wgloc::disorder::{covariance_b, perturbation_stats, BaseModel, DisorderSpec};
use wgloc::waveguide::{CoefficientProfile, LayerStack};

fn main() -> wgloc::Result<()> {
    let stack = LayerStack::from_pairs(&[(1.0, 1.0), (2.5, 0.1)])?;
    let nu = 9.0;

    let thick = DisorderSpec::thickness(stack.clone(), 1e-3)?;
    let s = perturbation_stats(&thick, nu, 20_000, 7)?;
    println!("thickness: E V = {:?} ± {:?}", s.mean, s.std_err);
    println!("{}", s.covariance.to_csv());

    let b = covariance_b(&CoefficientProfile::from_stack(&stack), nu)?;
    println!("index noise B (det {:.3e}, eigenvalues {:?}):", b.det(), b.eigenvalues());
    println!("{}", b.to_csv());

    let noise = DisorderSpec::index_noise(BaseModel::Stack(stack), 1e-5, 1e-3)?;
    let e = perturbation_stats(&noise, nu, 5_000, 11)?;
    println!("empirical / B on the (1,1) entry: {:.3}", e.covariance.get(0, 0) / b.get(0, 0));
    Ok(())
}
