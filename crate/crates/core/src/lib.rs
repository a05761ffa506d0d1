//! Simulation engine for a privacy-preserving crowdsensing marketplace with
//! long-term participation incentives.
//!
//! Users sell noisy sensor readings under local differential privacy; a
//! platform buys enough reports per task to hit an accuracy target, selecting
//! winners each slot through a reverse auction. Per-user virtual queues track
//! how long someone has gone unselected and discount their effective cost, so
//! selection rotates through the population instead of starving expensive
//! users. The crate provides the slot mechanism, queue-blind and forced-
//! rotation baselines, brute-force optima with an approximation certificate,
//! seeded scenario generation, and the online experiment loop.

pub mod auction;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod privacy;
pub mod report;
pub mod scenario;

pub use auction::{
    coverage, determine_payments, drift_exact_and_bound, run_slot, select_winners, virtual_cost,
    PaymentProfile, Selection, SlotInstance, SlotResult,
};
pub use baselines::{compulsory_slot, static_slot, CompulsoryOutcome, CompulsoryState};
pub use error::{Error, Result};
pub use experiment::{
    replication_seed, run_experiment, run_experiment_on, sweep, ExperimentTrace, SlotRecord,
    SweepAxis, SweepPoint, Termination,
};
pub use model::{
    accuracy_requirement, queue_update, total_payment, user_utility, AccuracySpec, Bid,
    EngineConfig, ResidualMap, SlotOutcome, Task, TaskId, User, UserId,
};
pub use oracle::{
    branch_and_bound_min_virtual_cost, brute_force_min_shifted_cost, brute_force_min_virtual_cost,
    certify_bound, cost_shift, truthfulness_probe, BoundCertificate, InstanceSampler,
    OracleSolution, ShiftedSolution, TruthfulnessViolation, MAX_ORACLE_USERS,
};
pub use privacy::{
    aggregate, empirical_accuracy, laplace_sample, noise_scale, perturb, verify_ldp,
};
pub use report::{
    write_certificates_jsonl, write_scenario_json, write_summary_csv, write_trace_csv,
    CertificateRecord,
};
pub use scenario::{generate_scenario, Mechanism, Preset, Scenario, ScenarioConfig};
