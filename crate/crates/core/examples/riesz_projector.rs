// Contour-integral projectors converge geometrically in the node count.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    let model = build_builtin("kane_mele", &params(&[("lv", 0.1)]))?;
    let family = ProjectorFamily::occupied(&model);
    let k = [0.13, -0.27];
    let exact = family.projector(&k)?;
    let mut last = f64::INFINITY;
    for nodes in [16, 32, 64] {
        let p = family.riesz(&k, nodes)?;
        let err = (&p - &exact).norm();
        println!("{nodes:3} nodes: |P_riesz - P| = {err:.2e}");
        assert!(err < last);
        last = err;
    }
    assert!(last < 1e-8);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
