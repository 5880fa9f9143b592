// Exponentially localized Wannier functions of the SSH chain.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    let model = build_builtin("ssh", &params(&[("t", 1.0), ("tp", 0.6)]))?;
    let grid = make_grid(model.lattice(), &[64])?;
    let family = ProjectorFamily::occupied(&model);
    let frame = smooth_periodic_frame(&family, &grid)?;
    let w = wannier_from_frame(&frame, model.lattice(), &[64])?;
    let report = wannier_report(&w, 2)?;
    let fit = report.decay.as_ref().expect("enough shells for a fit");
    println!(
        "spread {:.4}, decay rate {:.3} (r^2 = {:.4}), orthonormality defect {:.1e}",
        report.localization.spread, fit.beta, fit.r_squared, report.orthonormality_defect
    );
    assert!(fit.exponential);

    let scrambled = wannier_from_frame(&randomize_gauge(&frame, 3), model.lattice(), &[64])?;
    let spread = localization_moments(&scrambled, 2)?.spread;
    println!("random gauge spread {spread:.2}");
    assert!(spread > report.localization.spread);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
