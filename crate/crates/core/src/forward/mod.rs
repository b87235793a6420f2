//! Scenes of small anomalies and the leading-order dipole model of the
//! epoch-0 perturbation and the secular variation between two epochs.
//!
//! Both fields share the kernel `grad grad Gamma_0(x - z_l)` with
//! `Gamma_0 = -1/(4 pi |x|)`; they differ only in the weight per anomaly
//! (`v_l` for epoch 0, `w_l = (delta^{3 alpha_l} - 1) v_l` for the difference).

mod kernel;
mod samples;
mod scene;
mod validate;

pub use kernel::{
    grad_gamma0, hessian_gamma0, kernel_multipole, kernel_multipole_grad, kernel_multipole_hessian, KernelTerm,
    KernelValue, MAX_MULTIPOLE_RATIO,
};
pub use samples::{
    sidecar_path, synthesize_measurement, synthesize_measurement_with, Epoch, SampleMeta, VectorFieldSamples,
    CSV_HEADER,
};
pub use scene::{
    dipole_weights, epoch_perturbation, epoch_perturbation_with, eval_background, scene_tensors, secular_variation,
    secular_variation_with, Anomaly, BackgroundField, DipoleWeight, KernelMethod, Scene, Shape,
};
pub use validate::{validate_scene, CheckKind, Finding, ValidationReport, ALPHA_WINDOW, SEPARABILITY_TOL};
