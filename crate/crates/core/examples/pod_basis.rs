//! Global POD of the desk snapshots: singular value decay, energy-based rank
//! selection and the projection-error identity.

use poddl::dataset::{assemble_matrix, TimeWindow};
use poddl::fom::{generate_dataset, FomConfig};
use poddl::pod::{compute_pod, tail_energy, RankRule};

fn main() -> poddl::error::Result<()> {
    let cfg = FomConfig::desk();
    let set = generate_dataset(&cfg, &FomConfig::desk_params())?;
    let all: Vec<usize> = (0..set.n_samples()).collect();
    let window = TimeWindow::closed(set.times()[0], *set.times().last().unwrap());
    let s = assemble_matrix(&set, window, &all)?.data;

    let full = compute_pod(&s, RankRule::Fixed(200))?;
    let sigma = full.sigma();
    println!("sigma_1 = {:.3e}, sigma_200 = {:.3e}", sigma[0], sigma[199]);

    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        let b = compute_pod(&s, RankRule::Energy(eps))?;
        println!("energy tol {eps:.0e}: N = {}", b.n_modes());
    }

    // ||S - V V^T S||_F^2 equals the discarded squared singular values
    for n in [1, 8, 40] {
        let b = full.truncated(n)?;
        let resid = &s - b.reconstruct_matrix(&b.project_matrix(&s)?)?;
        let tail = tail_energy(sigma, n);
        println!("N = {n:>2}: residual^2 {:.6e}  tail {:.6e}", resid.norm_squared(), tail);
    }
    Ok(())
}
