// Build each builtin model and audit its declared symmetries.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    let cases = [
        ("ssh", params(&[])),
        ("haldane", params(&[("phi", 0.0)])),
        ("kane_mele", params(&[])),
        ("bhz", params(&[])),
        ("wilson_dirac_3d", params(&[])),
    ];
    for (name, p) in cases {
        let model = build_builtin(name, &p)?;
        let sizes = vec![8; model.lattice().dim()];
        let grid = make_grid(model.lattice(), &sizes)?;
        let audit = verify_model_symmetries(&model, &grid);
        println!(
            "{name:16} TR {:.1e} ({})  SR {:.1e} ({})",
            audit.tr_residual(),
            audit.tr_pass(),
            audit.sr_residual(),
            audit.sr_pass()
        );
        assert!(audit.tr_pass());
        let family = ProjectorFamily::occupied(&model);
        let proj = verify_projector_symmetries(&family, &grid)?;
        assert!(proj.idempotency < 1e-10);
    }
    // Haldane flux breaks time reversal.
    let chiral = build_builtin("haldane", &params(&[("phi", 1.2)]))?;
    let grid = make_grid(chiral.lattice(), &[8, 8])?;
    assert!(!verify_model_symmetries(&chiral, &grid).tr_pass());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
