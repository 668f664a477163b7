//! Numerical toolkit for the Anderson Hamiltonian `H = Δ + ξ` on the
//! two-dimensional torus with white-noise potential, and for semilinear
//! equations built on it.

pub mod choquard;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod noise;

mod form;
mod linalg;
pub mod operator;
pub mod spectral;
pub mod variational;

pub use error::{Error, Result};
pub use grid::{
    convolve, dft_forward, dft_inverse, geodesic_dist, inner_l2, norm_lp, GridField,
    SpectralField, TorusGrid, TORUS_MEASURE,
};
pub use noise::{mollify, regenerate, sample_white_noise, NoiseSample, NoiseSpec, RNG_ALGORITHM};
pub use operator::{compute_shift, AndersonOperator, HeatKernelReport, KernelSample};
pub use spectral::{
    eigendecompose, form_bound_constant, gap_delta, kato_modulus_heat, kato_modulus_log,
    resolvent_sup_norm, Potential, Spectrum, SpectrumSummary,
};
pub use variational::{
    check_assumption_a, energy, energy_gradient, fountain_solve, mountain_pass_solve,
    picard_baseline, ps_diagnostics, AssumptionReport, FountainOutcome, FountainParams,
    GeometryWitness, MountainPassParams, Nonlinearity, Problem, PsReport, ResultSummary,
    SolveResult, TraceEntry,
};
pub use choquard::{
    fenchel_conjugate_quadratic, is_trivial, lambda_apply, lambda_bound_check, quadratic_energy,
    selfdual_minimize, selfdual_value, selfdual_value_forms, BoundReport, ChoquardMaps,
    ChoquardProblem, SelfdualParams,
};
pub use harness::{
    emit_plotdata, manifest_path, run, verify_manifest, ChoquardSpec, Command, FileEntry,
    PlotSeries, RunConfig, RunManifest, Sweep, Timing, OUTPUT_ROOT_ENV,
};
