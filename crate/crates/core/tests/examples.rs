//! Every example in `examples/` runs as a test.

mod model_audit {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/model_audit.rs"));
}

#[test]
fn model_audit_runs() {
    model_audit::run_example().expect("model_audit example should run");
}

mod riesz_projector {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/riesz_projector.rs"
    ));
}

#[test]
fn riesz_projector_runs() {
    riesz_projector::run_example().expect("riesz_projector example should run");
}

mod chern_numbers {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/chern_numbers.rs"));
}

#[test]
fn chern_numbers_runs() {
    chern_numbers::run_example().expect("chern_numbers example should run");
}

mod z2_kane_mele {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/z2_kane_mele.rs"));
}

#[test]
fn z2_kane_mele_runs() {
    z2_kane_mele::run_example().expect("z2_kane_mele example should run");
}

mod z2_three_d {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/z2_three_d.rs"));
}

#[test]
fn z2_three_d_runs() {
    z2_three_d::run_example().expect("z2_three_d example should run");
}

mod smooth_frames {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/smooth_frames.rs"));
}

#[test]
fn smooth_frames_runs() {
    smooth_frames::run_example().expect("smooth_frames example should run");
}

mod wannier_decay {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/wannier_decay.rs"));
}

#[test]
fn wannier_decay_runs() {
    wannier_decay::run_example().expect("wannier_decay example should run");
}

mod plane_wave {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/plane_wave.rs"));
}

#[test]
fn plane_wave_runs() {
    plane_wave::run_example().expect("plane_wave example should run");
}

mod parameter_sweep {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/parameter_sweep.rs"
    ));
}

#[test]
fn parameter_sweep_runs() {
    parameter_sweep::run_example().expect("parameter_sweep example should run");
}
