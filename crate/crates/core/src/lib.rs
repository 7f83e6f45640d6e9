//! Numerical frequency-function laboratory for parabolic systems on flat
//! tori: energies, frequency quotients, differential inequalities with
//! explicit error terms, log-convexity certificates, weighted localization,
//! and the prolongation of a conformal curvature flow into that framework.

pub mod energetics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod higher_order;
pub mod localization;
pub mod operators;
pub mod prolongation;

pub use energetics::{
    energy_threshold, frequency_sandwich, EnergyFunctional, EnergyReport, FrequencyTrace,
    SampledState,
};
pub use error::{Error, Result};
pub use evolution::{
    backward_uniqueness_sweep, evolve, gronwall_certificate, CoupledSystem, Coupling,
    GronwallCertificate, PresetInstance, StepperMeta, Trajectory, TrajectoryPreset,
    TRAJECTORY_PRESETS,
};
pub use geometry::{
    Background, BundleStructure, EllipticCoefficient, FiberOp, MetricFamily, SymMat, TorusGrid,
    PRESET_NAMES,
};
pub use higher_order::{
    garding_check, higher_order_run, interpolation_check, interpolation_constant,
    interpolation_constant_sharp, kcf_dirichlet, simplified_energy_certificate, GardingCheck,
    HigherOrderRun, InterpolationCheck, SimplifiedEnergyCertificate,
};
pub use localization::{
    build_cutoff, build_rho, cutoff_limit_experiment, weight_rate, weighted_localize,
    CutoffConfig, CutoffFunction, CutoffLimitReport, LocalizationData, Smoothstep, WeightProfile,
};
pub use operators::{PrincipalPart, Section, SectionPair, SpectralKit};
pub use prolongation::{
    evolve_flow, gauss_curvature, perturbation_stability, prolong_pair, structural_audit,
    FlowTrajectory, ProlongedSample, StabilityReport, StructuralAudit,
};
