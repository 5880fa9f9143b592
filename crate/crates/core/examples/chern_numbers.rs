// Haldane phase diagram from two independent Chern evaluations.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    for mass in [0.0, 0.3, 1.2] {
        let model = build_builtin(
            "haldane",
            &params(&[("phi", std::f64::consts::FRAC_PI_2), ("M", mass)]),
        )?;
        let grid = make_grid(model.lattice(), &[24, 24])?;
        let family = ProjectorFamily::occupied(&model);
        let plaquette = chern_number_plaquette(&family, &grid, (0, 1))?;
        let field = berry_curvature(&family, &grid, (0, 1), None)?;
        let curvature = chern_number_curvature(&field);
        println!(
            "M = {mass:3.1}: plaquette {} (residual {:.1e}), curvature {} (raw {:.4})",
            plaquette.value, plaquette.residual, curvature.value, curvature.raw
        );
        assert_eq!(plaquette.value, curvature.value);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
