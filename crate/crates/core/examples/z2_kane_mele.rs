// Z2 index of the Kane-Mele model on both sides of the Rashba-free transition.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    for (lv, expected) in [(0.1, 1), (0.5, 0)] {
        let model = build_builtin("kane_mele", &params(&[("lv", lv)]))?;
        let grid = make_grid(model.lattice(), &[24, 24])?;
        let family = ProjectorFamily::occupied(&model);
        let boundary = z2_boundary_winding(&family, &grid)?;
        let flow = z2_wilson_flow(&family, &grid)?;
        println!(
            "lv = {lv}: boundary delta {} (winding {}), Wilson delta {} ({} crossings)",
            boundary.delta,
            boundary.winding,
            flow.delta,
            flow.diagnostics.crossings.unwrap_or(0)
        );
        assert_eq!(boundary.delta, expected);
        assert_eq!(flow.delta, expected);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
