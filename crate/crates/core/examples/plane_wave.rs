// Continuous periodic potential: plane-wave fibers and the Bloch-Floquet transform.

use std::f64::consts::PI;

use topoband::prelude::*;

pub fn run_example() -> Result<()> {
    let lattice = Lattice::cubic(1)?;
    let basis = PlaneWaveBasis::new(&lattice, 2.0 * PI * 6.0)?;
    let v = FourierPotential::cosine(1, 0, -2.0)?;
    let h = PlaneWaveHamiltonian::new(basis.clone(), v.clone(), 1)?;
    let grid = make_grid(&lattice, &[16])?;
    let family = ProjectorFamily::occupied(&h);
    let gap = gap_check(&family, &grid);
    println!("{} plane waves, lowest gap {:.4}", basis.len(), gap.min_gap);
    println!(
        "intertwiner residual at k = 0.3: {:.1e}",
        classical_intertwiner_check(&v, &basis, &[0.3])
    );

    // One function localized in the home cell, transformed and back.
    let cells = make_grid(&lattice, &[16])?;
    let m = 32;
    let mut values = vec![num_complex::Complex64::new(0.0, 0.0); cells.len() * m];
    let home = cells.index_of(&[0]);
    for j in 0..m {
        let y = j as f64 / m as f64;
        values[home * m + j] = num_complex::Complex64::new((PI * y).sin(), 0.0);
    }
    let w = SupercellSamples::new(cells, m, values)?;
    let phi = bf_forward(&w)?;
    let back = bf_inverse(&phi)?;
    let err = back
        .values
        .iter()
        .zip(&w.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!(
        "norm ratio {:.15}, round trip error {err:.1e}",
        phi.norm() / w.norm()
    );
    assert!(err < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
