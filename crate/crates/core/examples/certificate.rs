//! Check whether a fusion solved the rank-constrained intersection problem.

use eco_dkf::certify::{brute_force_rank1, certify};
use eco_dkf::fusion::{solve_lj, FusionInput};
use eco_dkf::matkernel::{Matrix, SymMatrix};

pub fn run_example() -> eco_dkf::Result<()> {
    let cases = [
        ("crossed", vec![SymMatrix::from_diag(&[4.0, 1.0]), SymMatrix::from_diag(&[1.0, 4.0])]),
        (
            "nested",
            vec![
                SymMatrix::from_diag(&[5.0, 0.5]),
                Matrix::rotation(0.3).congruence(&SymMatrix::from_diag(&[6.0, 0.8])),
            ],
        ),
    ];
    for (name, infos) in cases {
        let fused = solve_lj(&FusionInput::from_matrices(infos.clone())?)?;
        let cert = certify(&infos, &fused.s_star)?;
        let brute = brute_force_rank1(&infos, 10_000)?;
        println!(
            "{name}: Tr X* = {:.5}, rank {}, rho {:.5}, certified {}, rank-one optimum {:.5}",
            cert.trace_x, cert.rank, cert.rho, cert.certified, brute
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> eco_dkf::Result<()> {
    run_example()
}
