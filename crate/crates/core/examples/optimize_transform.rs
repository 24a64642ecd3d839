//! Pattern search and Monte Carlo search for a channel transform on a small
//! synthetic training set. Pass a budget to change the search length.

use polar_bm3d::bm3d::DenoiseProfile;
use polar_bm3d::dataset::{make_fixture, FixtureKind};
use polar_bm3d::optimize::{format_matrix, monte_carlo_search, objective, pattern_search, presets, OptimizationRun};

fn main() -> polar_bm3d::Result<()> {
    let budget: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let data = (0..2).map(|i| make_fixture(FixtureKind::Textured, 64, 50 + i)).collect::<Result<Vec<_>, _>>()?;
    let mut run = OptimizationRun::new(data, 0.057, 0);
    run.profile = DenoiseProfile::fast();
    run.budget = budget;

    for name in ["stokes", "opponent", "opt-global"] {
        println!("{name:>10}: {:.5e}", objective(&presets::preset(name)?, &run)?.mean_mse);
    }
    let p = pattern_search(&run, &presets::opponent())?;
    println!(
        "pattern search: {:.5e} after {} iterations ({} evaluations, converged {})",
        p.value.mean_mse, p.outcome.iterations, p.outcome.evaluations, p.outcome.converged
    );
    print!("{}", format_matrix(p.outcome.transform.matrix()));

    run.budget = p.outcome.evaluations;
    let m = monte_carlo_search(&run)?;
    println!("monte carlo, {} draws: {:.5e}", run.budget, m.value.mean_mse);
    print!("{}", format_matrix(m.outcome.transform.matrix()));
    Ok(())
}
