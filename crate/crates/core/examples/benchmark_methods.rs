//! Scores every method on a few fixtures at two noise levels and prints the
//! table plus JSON lines.

use polar_bm3d::dataset::{make_fixture, FixtureKind};
use polar_bm3d::metrics::{evaluate_method, format_table, EvalParams};
use polar_bm3d::noise::{add_noise, NoiseSpec};
use polar_bm3d::optimize::{image_seed, presets};
use polar_bm3d::pbm3d::Method;

fn main() -> polar_bm3d::Result<()> {
    let mut reports = Vec::new();
    for i in 0..3 {
        let truth = make_fixture(FixtureKind::Textured, 96, i as u64)?;
        for sigma in [0.026, 0.1] {
            let mut params = EvalParams::new(format!("textured-{i}"), sigma, presets::opt_global(), "opt-global");
            params.seed = image_seed(0, i);
            let noisy = add_noise(&truth, NoiseSpec::new(sigma, params.seed)?)?;
            for method in Method::ALL {
                reports.push(evaluate_method(&noisy, &truth, method, &params)?);
            }
        }
    }
    print!("{}", format_table(&reports));
    println!();
    for r in reports.iter().take(4) {
        println!("{}", r.to_json_line());
    }
    Ok(())
}
