//! Solves a small inequality-constrained QP and prints the solution and its
//! KKT residual.

use battery_mpcrl::qp::{kkt_residual, solve, CsrMatrix, QpProblem, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // min ½‖x‖² − x₀ − x₁  s.t.  x₀ + x₁ = 1.5,  x₀ ≤ 0.5,  x ≥ 0
    let problem = QpProblem::new(
        CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]),
        vec![-1.0, -1.0],
        CsrMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]),
        vec![1.5],
        CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 0, -1.0), (2, 1, -1.0)]),
        vec![0.5, 0.0, 0.0],
    );
    let sol = solve(&problem, &SolverSettings::default())?;
    let r = kkt_residual(&problem, &sol.x, &sol.lambda, &sol.mu)?;
    println!("status      {:?} after {} iterations (polished: {})", sol.status, sol.iterations, sol.polished);
    println!("x           {:?}", sol.x);
    println!("lambda      {:?}", sol.lambda);
    println!("mu          {:?}", sol.mu);
    println!("active set  {:?}", sol.active_set);
    println!("objective   {:.6}", problem.objective(&sol.x));
    println!("|R|_inf     {:.3e}", r.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    Ok(())
}
