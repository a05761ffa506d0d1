//! Command-line front end: run single experiments, sweep a parameter grid,
//! certify the mechanism against brute-force optima, or check the noise
//! accuracy guarantee.
//!
//! Exit codes: 0 success, 1 usage error, 2 infeasible configuration,
//! 3 certification failure.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lepa_core::{
    accuracy_requirement, certify_bound, empirical_accuracy, replication_seed, run_experiment,
    sweep, truthfulness_probe, write_certificates_jsonl, write_scenario_json, write_summary_csv,
    write_trace_csv, AccuracySpec, Bid, CertificateRecord, Error, InstanceSampler, Mechanism,
    Preset, ScenarioConfig, SweepAxis, Termination,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SettingArg {
    #[value(name = "I", alias = "i", alias = "1")]
    One,
    #[value(name = "II", alias = "ii", alias = "2")]
    Two,
    #[value(name = "III", alias = "iii", alias = "3")]
    Three,
}

impl From<SettingArg> for Preset {
    fn from(arg: SettingArg) -> Self {
        match arg {
            SettingArg::One => Preset::I,
            SettingArg::Two => Preset::II,
            SettingArg::Three => Preset::III,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Lepa,
    Static,
    Compulsory,
}

impl From<MechanismArg> for Mechanism {
    fn from(arg: MechanismArg) -> Self {
        match arg {
            MechanismArg::Lepa => Mechanism::Lepa,
            MechanismArg::Static => Mechanism::Static,
            MechanismArg::Compulsory => Mechanism::Compulsory,
        }
    }
}

/// Optional overrides loaded from `--config`; every field falls back to the
/// preset value when absent.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    setting: Option<Preset>,
    n: Option<usize>,
    k: Option<usize>,
    alpha_range: Option<(f64, f64)>,
    delta_range: Option<(f64, f64)>,
    cost_range: Option<(f64, f64)>,
    capability_range: Option<(u32, u32)>,
    epsilon: Option<f64>,
    zeta: Option<f64>,
    gamma: Option<f64>,
    participation_rate: Option<f64>,
    horizon: Option<u32>,
    dropout_window: Option<u32>,
    seed: Option<u64>,
    mechanism: Option<Mechanism>,
    redraw_costs: Option<bool>,
    strict_participation: Option<bool>,
    reserve_price: Option<f64>,
}

impl FileConfig {
    fn apply(self, base: &mut ScenarioConfig) {
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if let Some(value) = self.$field {
                    base.$field = value;
                })*
            };
        }
        merge!(
            n,
            k,
            alpha_range,
            delta_range,
            cost_range,
            capability_range,
            epsilon,
            zeta,
            gamma,
            participation_rate,
            horizon,
            dropout_window,
            seed,
            mechanism,
            redraw_costs,
            strict_participation
        );
        if self.reserve_price.is_some() {
            base.reserve_price = self.reserve_price;
        }
    }
}

/// Flags shared by `run` and `sweep`, layered over preset and file values.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Preset: I (baseline), II (user sweep), III (privacy sweep).
    /// Defaults to the config file's setting, or I.
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    /// Config file (JSON) overriding the preset field by field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mechanism: Option<MechanismArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of time slots.
    #[arg(long)]
    horizon: Option<u32>,
    /// Queue weight; larger favors cheap winners over waiting users.
    #[arg(long)]
    gamma: Option<f64>,
    /// Target selection frequency D in (0, 1).
    #[arg(long)]
    participation_rate: Option<f64>,
    /// Privacy level of the reports.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Width of the sensed-value range; scales noise and requirements.
    #[arg(long)]
    zeta: Option<f64>,
    /// Consecutive unselected slots before a user leaves.
    #[arg(long)]
    dropout_window: Option<u32>,
    /// Treat a participation-feasibility shortfall as an error.
    #[arg(long)]
    strict_participation: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ScenarioConfig, Error> {
        let file: FileConfig = match &self.config {
            Some(path) => serde_json::from_reader(File::open(path)?)?,
            None => FileConfig::default(),
        };
        // An explicit --setting flag beats the file's; either picks the
        // preset whose defaults the remaining file fields then override.
        let preset = self
            .setting
            .map(Preset::from)
            .or(file.setting)
            .unwrap_or(Preset::I);
        let mut config = ScenarioConfig::preset(preset);
        file.apply(&mut config);
        macro_rules! override_flag {
            ($($field:ident),*) => {
                $(if let Some(value) = self.$field {
                    config.$field = value;
                })*
            };
        }
        override_flag!(
            seed,
            horizon,
            gamma,
            participation_rate,
            epsilon,
            zeta,
            dropout_window
        );
        if let Some(mechanism) = self.mechanism {
            config.mechanism = mechanism.into();
        }
        if self.strict_participation {
            config.strict_participation = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Parser)]
#[command(name = "lepa", version, about = "Crowdsensing auction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv + scenario.json.
    Run(ExperimentArgs),
    /// Run seeded replications over the preset's grid; write summary.csv.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value_t = 10)]
        replications: u32,
    },
    /// Check the payment bound and truthfulness on random small instances.
    Certify {
        #[arg(long, default_value_t = 500)]
        instances: u32,
        /// Largest user count per instance.
        #[arg(long, default_value_t = 10)]
        max_n: u32,
        /// Largest task count per instance.
        #[arg(long, default_value_t = 5)]
        max_k: u32,
        /// Misreports probed per instance.
        #[arg(long, default_value_t = 20)]
        probes: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Monte Carlo check of the aggregation accuracy guarantee.
    Accuracy {
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };

    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep {
            experiment,
            replications,
        } => cmd_sweep(&experiment, replications),
        Command::Certify {
            instances,
            max_n,
            max_k,
            probes,
            seed,
            out,
        } => cmd_certify(instances, max_n, max_k, probes, seed, &out),
        Command::Accuracy { trials, zeta, seed } => cmd_accuracy(trials, zeta, seed),
    };

    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_)
        | Error::GenerationInfeasible { .. }
        | Error::ParticipationInfeasible { .. }
        | Error::TooLarge { .. }
        | Error::BelowRequirement { .. } => 2,
        _ => 1,
    }
}

fn create_out_file(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn cmd_run(args: &ExperimentArgs) -> Result<i32, Error> {
    let config = args.resolve()?;
    let trace = run_experiment(&config)?;

    write_trace_csv(&trace, create_out_file(&args.out, "trace.csv")?)?;
    write_scenario_json(&config, create_out_file(&args.out, "scenario.json")?)?;

    println!(
        "ran {} slots: {} users alive, cumulative payment {:.3}",
        trace.records.len(),
        trace.final_alive(),
        trace.cumulative_payment()
    );
    if let Termination::Truncated { slot, tasks } = &trace.termination {
        println!("stopped at slot {slot}: tasks {tasks:?} no longer coverable");
    }
    println!("wrote {}", args.out.join("trace.csv").display());
    Ok(0)
}

fn cmd_sweep(args: &ExperimentArgs, replications: u32) -> Result<i32, Error> {
    let config = args.resolve()?;
    let grid = ScenarioConfig::default_grid(config.setting.unwrap_or(Preset::I));
    let axis = match config.setting {
        Some(Preset::II) => SweepAxis::Users(grid.iter().map(|&n| n as usize).collect()),
        Some(Preset::III) => SweepAxis::Epsilon(grid),
        _ => {
            return Err(Error::InvalidParameter {
                name: "setting",
                value: 1.0,
                requirement: "II or III (the sweepable presets)",
            })
        }
    };

    let points = sweep(&config, &axis, replications)?;
    write_summary_csv(&points, create_out_file(&args.out, "summary.csv")?)?;
    write_scenario_json(&config, create_out_file(&args.out, "scenario.json")?)?;

    for point in &points {
        println!(
            "grid {:>7.2}: mean {:.3}, std {:.3} over {} replications",
            point.grid_value, point.mean_avg_payment, point.std_avg_payment, point.replications
        );
    }
    println!("wrote {}", args.out.join("summary.csv").display());
    Ok(0)
}

/// Random misreport of one truthful bid: rescaled costs, a shrunk task set,
/// or both.
fn sample_misreport<R: Rng + ?Sized>(rng: &mut R, truth: &Bid) -> Bid {
    let mut bid = truth.clone();
    if rng.gen_bool(0.8) {
        bid.sensing_bid *= rng.gen_range(0.25..=2.5);
    }
    if rng.gen_bool(0.8) {
        bid.unit_privacy_bid *= rng.gen_range(0.25..=2.5);
    }
    if rng.gen_bool(0.3) {
        let keep: Vec<_> = bid
            .capability
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.6))
            .collect();
        bid.capability = keep.into_iter().collect();
    }
    bid
}

fn cmd_certify(
    instances: u32,
    max_n: u32,
    max_k: u32,
    probes: u32,
    seed: u64,
    out: &Path,
) -> Result<i32, Error> {
    let sampler = InstanceSampler::certification(max_n as usize, max_k as usize);
    let mut records = Vec::with_capacity(instances as usize);
    let mut bound_violations = 0u32;
    let mut truth_violations = 0u32;
    let mut skipped = 0u32;

    for index in 0..instances {
        let instance_seed = replication_seed(seed, 0, u64::from(index));
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        let instance = sampler.sample(&mut rng);

        match certify_bound(&instance) {
            Ok(certificate) => {
                if !(certificate.pass && certificate.shift_relation_holds()) {
                    bound_violations += 1;
                }
                records.push(CertificateRecord::certified(instance_seed, certificate));
            }
            Err(Error::DegenerateRatio(reason)) => {
                skipped += 1;
                log::warn!("instance {instance_seed}: degenerate ratio, skipped ({reason})");
                records.push(CertificateRecord::skipped(instance_seed, reason));
            }
            Err(other) => return Err(other),
        }

        for _ in 0..probes {
            let position = rng.gen_range(0..instance.bids.len());
            let truth = &instance.bids[position];
            let misreport = sample_misreport(&mut rng, truth);
            let violations = truthfulness_probe(&instance, truth.user_id, &[misreport])?;
            if !violations.is_empty() {
                truth_violations += violations.len() as u32;
                for v in violations {
                    log::error!(
                        "instance {instance_seed}: user {} gained {:.6} by misreporting",
                        v.user,
                        v.deviant_utility - v.truthful_utility
                    );
                }
            }
        }
    }

    write_certificates_jsonl(&records, create_out_file(out, "certificates.jsonl")?)?;

    println!(
        "certified {} instances: {} bound violations, {} truthfulness violations, \
         {} degenerate skipped",
        instances, bound_violations, truth_violations, skipped
    );
    println!("wrote {}", out.join("certificates.jsonl").display());
    Ok(if bound_violations + truth_violations > 0 {
        3
    } else {
        0
    })
}

fn cmd_accuracy(trials: u64, zeta: f64, seed: u64) -> Result<i32, Error> {
    let alphas = [1.0, 2.0];
    let deltas = [0.1, 0.2];
    let epsilons = [0.5, 0.75, 1.0, 1.5, 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0u32;

    println!(
        "{:>6} {:>6} {:>5} {:>5} {:>10} {:>6}",
        "alpha", "delta", "eps", "n", "miss_rate", "ok"
    );
    for &alpha in &alphas {
        for &delta in &deltas {
            for &epsilon in &epsilons {
                let spec = AccuracySpec { alpha, delta };
                let required = accuracy_requirement(&spec, epsilon, zeta)?;
                let miss = empirical_accuracy(required, &spec, epsilon, zeta, trials, &mut rng)?;
                let ok = miss <= delta;
                failures += u32::from(!ok);
                println!(
                    "{alpha:>6.2} {delta:>6.2} {epsilon:>5.2} {required:>5} {miss:>10.5} {:>6}",
                    if ok { "yes" } else { "NO" }
                );
            }
        }
    }

    if failures > 0 {
        println!("{failures} cells exceeded their miss-rate target");
        Ok(3)
    } else {
        println!("all 20 cells within their miss-rate target");
        Ok(0)
    }
}
