// Strong and weak indices of a 3D Wilson-Dirac insulator.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    let model = build_builtin("wilson_dirac_3d", &params(&[("m", -2.0)]))?;
    let grid = make_grid(model.lattice(), &[8, 8, 8])?;
    let family = ProjectorFamily::occupied(&model);
    let q = z2_3d(&family, &grid)?;
    println!(
        "(nu0; nu1 nu2 nu3) = ({}; {} {} {}), consistent {}, methods agree {}",
        q.strong, q.delta_1_plus, q.delta_2_plus, q.delta_3_plus, q.consistent, q.methods_agree
    );
    assert_eq!(q.strong, 1);
    assert!(q.consistent && q.methods_agree);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
