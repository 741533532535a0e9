//! Fuse two crossed information ellipses without knowing their correlation.

use eco_dkf::fusion::{fuse_mean, solve_lj, FusionInput};
use eco_dkf::matkernel::SymMatrix;

pub fn run_example() -> eco_dkf::Result<()> {
    let a = SymMatrix::from_diag(&[4.0, 1.0]);
    let b = SymMatrix::from_diag(&[1.0, 4.0]);
    let input = FusionInput::new(vec![(0, a), (7, b)])?;
    let out = solve_lj(&input)?;
    println!("weights: {:?}", out.ids.iter().zip(&out.lambda_star).collect::<Vec<_>>());
    println!("fused information: {:?}", out.s_star);
    println!("Tr(P*) = {:.6} after {} iterations (gap {:.1e})", out.objective, out.iterations, out.gap);

    // information vectors S_j x_j of two estimates of the same state
    let (x, p) = fuse_mean(&out, &[vec![4.0, 0.5], vec![1.2, 2.0]])?;
    println!("fused mean {x:?}, covariance {p:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
