// Smooth periodic Bloch frames exist exactly when the Chern numbers vanish.

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    let km = build_builtin("kane_mele", &params(&[("lv", 0.1)]))?;
    let grid = make_grid(km.lattice(), &[16, 16])?;
    let family = ProjectorFamily::occupied(&km);
    let frame = smooth_periodic_frame(&family, &grid)?;
    println!(
        "kane_mele: smooth {}, tau-equivariant {}, max |dPhi| {:.3}, equivariance residual {:.1e}",
        frame.flags.smooth,
        frame.flags.tau_equivariant,
        frame.diagnostics.max_derivative,
        frame.diagnostics.equivariance_residual
    );
    assert!(frame.flags.smooth);

    let haldane = build_builtin("haldane", &params(&[("phi", std::f64::consts::FRAC_PI_2)]))?;
    let family = ProjectorFamily::occupied(&haldane);
    match smooth_periodic_frame(&family, &grid) {
        Err(TopoError::Obstruction(c)) => println!("haldane: obstructed by {c:?}"),
        other => panic!("expected an obstruction, got {:?}", other.map(|f| f.flags)),
    }

    // Kramers frame at Gamma, transported to the zone edge.
    let path: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 / 40.0, 0.0]).collect();
    let start = kramers_frame(
        &ProjectorFamily::occupied(&km).projector(&path[0])?,
        km.time_reversal().unwrap(),
        &ReshuffleMatrix::for_time_reversal(2, km.time_reversal().unwrap())?,
    )?;
    let line = parallel_transport(&ProjectorFamily::occupied(&km), &start, &path)?;
    println!(
        "transported {} samples, orthonormality {:.1e}",
        line.len(),
        line.diagnostics.orthonormality
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
