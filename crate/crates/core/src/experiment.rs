//! The online experiment loop: per-slot auctions over an evolving user
//! population, dropout of persistently unselected users, and sweeps over a
//! parameter grid with seeded replications.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

use crate::auction::{run_slot, SlotInstance};
use crate::baselines::{compulsory_slot, static_slot, CompulsoryState};
use crate::error::{Error, Result};
use crate::model::{total_payment, TaskId, UserId};
use crate::scenario::{generate_scenario, Mechanism, Scenario, ScenarioConfig};

/// Everything recorded about one slot, after dropout took effect.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u32,
    pub total_payment: f64,
    pub cum_payment: f64,
    pub winners: BTreeSet<UserId>,
    pub alive: u32,
    pub max_queue: f64,
    /// Queue backlog per user, aligned with the trace's `user_ids`;
    /// departed users read zero.
    pub queues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// The alive population could no longer cover these tasks; the trace
    /// stops at this slot.
    Truncated {
        slot: u32,
        tasks: Vec<TaskId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub user_ids: Vec<UserId>,
    pub records: Vec<SlotRecord>,
    pub selection_counts: BTreeMap<UserId, u32>,
    /// Slots each user spent alive and bidding.
    pub slots_present: BTreeMap<UserId, u32>,
    pub termination: Termination,
}

impl ExperimentTrace {
    /// Fraction of a user's alive slots in which they won.
    pub fn selection_frequency(&self, user: UserId) -> f64 {
        let present = self.slots_present.get(&user).copied().unwrap_or(0);
        if present == 0 {
            return 0.0;
        }
        f64::from(self.selection_counts.get(&user).copied().unwrap_or(0)) / f64::from(present)
    }

    pub fn final_alive(&self) -> u32 {
        self.records.last().map_or(0, |r| r.alive)
    }

    pub fn cumulative_payment(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_payment)
    }

    /// Total payment averaged over the slots actually run.
    pub fn time_averaged_payment(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.cumulative_payment() / self.records.len() as f64
    }
}

/// Generate a population from the config and run the full horizon.
pub fn run_experiment(config: &ScenarioConfig) -> Result<ExperimentTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scenario = generate_scenario(config, &mut rng)?;
    run_experiment_on(config, scenario, &mut rng)
}

/// Run the horizon over an already-built population. The rng continues the
/// stream used during generation; it only matters when costs are redrawn
/// per slot.
pub fn run_experiment_on<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    scenario: Scenario,
    rng: &mut R,
) -> Result<ExperimentTrace> {
    config.validate()?;
    let engine = config.engine_config()?;
    let Scenario { mut users, tasks } = scenario;
    let mut compulsory = CompulsoryState::new(config.participation_rate)?;

    let user_ids: Vec<UserId> = users.iter().map(|u| u.id).collect();
    let mut selection_counts: BTreeMap<UserId, u32> = user_ids.iter().map(|&id| (id, 0)).collect();
    let mut slots_present = selection_counts.clone();
    let mut records: Vec<SlotRecord> = Vec::with_capacity(config.horizon as usize);
    let mut cum_payment = 0.0;
    let mut termination = Termination::Completed;

    for slot in 0..config.horizon {
        if config.redraw_costs {
            for user in users.iter_mut().filter(|u| u.alive) {
                user.sensing_cost = rng.gen_range(config.cost_range.0..=config.cost_range.1);
                user.unit_privacy_cost = rng.gen_range(config.cost_range.0..=config.cost_range.1);
            }
        }

        let instance = SlotInstance {
            bids: users
                .iter()
                .filter(|u| u.alive)
                .map(|u| u.truthful_bid())
                .collect(),
            tasks: tasks.clone(),
            queues: users
                .iter()
                .filter(|u| u.alive)
                .map(|u| (u.id, u.queue))
                .collect(),
            config: engine.clone(),
        };

        let result = match config.mechanism {
            Mechanism::Lepa => run_slot(&instance),
            Mechanism::Static => static_slot(&instance),
            Mechanism::Compulsory => compulsory_slot(&instance, &mut compulsory).map(|o| o.result),
        };
        let result = match result {
            Ok(result) => result,
            Err(Error::Infeasible(tasks)) => {
                termination = Termination::Truncated { slot, tasks };
                break;
            }
            Err(other) => return Err(other),
        };

        let slot_payment = total_payment(&result.outcome);
        cum_payment += slot_payment;
        for user in users.iter_mut().filter(|u| u.alive) {
            user.queue = result.next_queues[&user.id];
            *slots_present.get_mut(&user.id).unwrap() += 1;
            if result.outcome.winners.contains(&user.id) {
                user.consecutive_unselected = 0;
                *selection_counts.get_mut(&user.id).unwrap() += 1;
            } else {
                user.consecutive_unselected += 1;
                if user.consecutive_unselected >= config.dropout_window {
                    user.alive = false;
                    user.queue = 0.0;
                }
            }
        }

        records.push(SlotRecord {
            slot,
            total_payment: slot_payment,
            cum_payment,
            winners: result.outcome.winners,
            alive: users.iter().filter(|u| u.alive).count() as u32,
            max_queue: users
                .iter()
                .filter(|u| u.alive)
                .map(|u| u.queue)
                .fold(0.0, f64::max),
            queues: users.iter().map(|u| u.queue).collect(),
        });
    }

    Ok(ExperimentTrace {
        user_ids,
        records,
        selection_counts,
        slots_present,
        termination,
    })
}

/// What a sweep varies across its grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Users(Vec<usize>),
    Epsilon(Vec<f64>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::Users(g) => g.len(),
            SweepAxis::Epsilon(g) => g.len(),
        }
    }

    fn apply(&self, index: usize, base: &ScenarioConfig) -> (f64, ScenarioConfig) {
        match self {
            SweepAxis::Users(grid) => (
                grid[index] as f64,
                ScenarioConfig {
                    n: grid[index],
                    ..base.clone()
                },
            ),
            SweepAxis::Epsilon(grid) => (
                grid[index],
                ScenarioConfig {
                    epsilon: grid[index],
                    ..base.clone()
                },
            ),
        }
    }
}

/// Per-grid-point summary of time-averaged payments across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub grid_value: f64,
    pub mean_avg_payment: f64,
    pub std_avg_payment: f64,
    pub replications: u32,
}

/// Deterministic per-replication seed, mixed so neighboring grid points and
/// replication indices land far apart.
pub fn replication_seed(seed: u64, grid_index: u64, replication: u64) -> u64 {
    let mut z = seed
        ^ grid_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ replication.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run every grid point with seeded replications (in parallel) and report
/// the mean and sample standard deviation of the time-averaged payment.
pub fn sweep(
    base: &ScenarioConfig,
    axis: &SweepAxis,
    replications: u32,
) -> Result<Vec<SweepPoint>> {
    if replications < 1 {
        return Err(Error::InvalidParameter {
            name: "replications",
            value: f64::from(replications),
            requirement: "at least 1",
        });
    }

    let mut points = Vec::with_capacity(axis.len());
    for index in 0..axis.len() {
        let (grid_value, config) = axis.apply(index, base);
        let averages: Result<Vec<f64>> = (0..replications)
            .into_par_iter()
            .map(|rep| {
                let config = ScenarioConfig {
                    seed: replication_seed(base.seed, index as u64, u64::from(rep)),
                    ..config.clone()
                };
                Ok(run_experiment(&config)?.time_averaged_payment())
            })
            .collect();
        let averages = averages?;

        let n = averages.len() as f64;
        let mean = averages.iter().sum::<f64>() / n;
        let std = if averages.len() > 1 {
            (averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        points.push(SweepPoint {
            grid_value,
            mean_avg_payment: mean,
            std_avg_payment: std,
            replications,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AccuracySpec, Task, User};
    use crate::scenario::Preset;

    /// Small population that runs fast: 16 users, 3 tasks, requirements
    /// capped around 6 reports so every seed generates.
    fn small_config(mechanism: Mechanism) -> ScenarioConfig {
        ScenarioConfig {
            n: 16,
            k: 3,
            alpha_range: (1.5, 2.0),
            delta_range: (0.15, 0.2),
            zeta: 1.0,
            gamma: 1.5,
            capability_range: (2, 3),
            horizon: 50,
            mechanism,
            ..ScenarioConfig::preset(Preset::I)
        }
    }

    #[test]
    fn traces_are_deterministic_under_the_seed() {
        for mechanism in [Mechanism::Lepa, Mechanism::Static, Mechanism::Compulsory] {
            let config = small_config(mechanism);
            let a = run_experiment(&config).unwrap();
            let b = run_experiment(&config).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cumulative_payment_never_decreases_and_alive_never_increases() {
        for mechanism in [Mechanism::Lepa, Mechanism::Static, Mechanism::Compulsory] {
            let trace = run_experiment(&small_config(mechanism)).unwrap();
            assert_eq!(trace.records.len(), 50);
            for pair in trace.records.windows(2) {
                assert!(pair[1].cum_payment >= pair[0].cum_payment);
                assert!(pair[1].alive <= pair[0].alive);
            }
        }
    }

    #[test]
    fn disabling_dropout_keeps_everyone_alive() {
        let config = ScenarioConfig {
            dropout_window: u32::MAX,
            ..small_config(Mechanism::Static)
        };
        let trace = run_experiment(&config).unwrap();
        assert!(trace.records.iter().all(|r| r.alive == 16));
    }

    #[test]
    fn static_auction_sheds_unselected_users() {
        let config = ScenarioConfig {
            dropout_window: 5,
            ..small_config(Mechanism::Static)
        };
        let trace = run_experiment(&config).unwrap();
        assert!(trace.final_alive() < 16);
    }

    #[test]
    fn uncoverable_population_truncates_with_a_record() {
        let config = small_config(Mechanism::Lepa);
        let users: Vec<User> = (0..4)
            .map(|i| User::new(UserId(i), 1.0, 1.0, BTreeSet::from([TaskId(0)])))
            .collect();
        let tasks = vec![Task::with_requirement(
            TaskId(0),
            AccuracySpec {
                alpha: 1.0,
                delta: 0.2,
            },
            9,
        )];
        let scenario = Scenario { users, tasks };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = run_experiment_on(&config, scenario, &mut rng).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(
            trace.termination,
            Termination::Truncated {
                slot: 0,
                tasks: vec![TaskId(0)],
            }
        );
        assert_eq!(trace.time_averaged_payment(), 0.0);
    }

    #[test]
    fn compulsory_rotation_meets_the_participation_rate() {
        let config = ScenarioConfig {
            horizon: 100,
            ..small_config(Mechanism::Compulsory)
        };
        let trace = run_experiment(&config).unwrap();
        assert_eq!(trace.final_alive(), 16);
        for &id in &trace.user_ids {
            // Forced at least once per ceil(1/0.2) = 5 slots.
            assert!(
                trace.selection_frequency(id) >= 0.2 - 1e-9,
                "user {id} at {}",
                trace.selection_frequency(id)
            );
        }
    }

    #[test]
    fn lepa_rotates_queued_users_back_in() {
        let config = ScenarioConfig {
            horizon: 200,
            ..small_config(Mechanism::Lepa)
        };
        let trace = run_experiment(&config).unwrap();
        assert_eq!(trace.final_alive(), 16, "dropouts under the full mechanism");
        for &id in &trace.user_ids {
            assert!(
                trace.selection_frequency(id) > 0.0,
                "user {id} never selected"
            );
        }
    }

    #[test]
    fn replication_seeds_spread_apart() {
        let mut seen = BTreeSet::new();
        for grid in 0..5u64 {
            for rep in 0..20u64 {
                seen.insert(replication_seed(42, grid, rep));
            }
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn degenerate_sweep_reduces_to_a_single_run() {
        let base = small_config(Mechanism::Lepa);
        let points = sweep(&base, &SweepAxis::Users(vec![16]), 1).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].std_avg_payment, 0.0);
        assert_eq!(points[0].replications, 1);

        let direct = run_experiment(&ScenarioConfig {
            seed: replication_seed(base.seed, 0, 0),
            ..base
        })
        .unwrap();
        assert_eq!(points[0].mean_avg_payment, direct.time_averaged_payment());
    }

    #[test]
    fn sweeps_are_deterministic_and_cover_the_grid() {
        let base = ScenarioConfig {
            horizon: 25,
            ..small_config(Mechanism::Lepa)
        };
        let axis = SweepAxis::Epsilon(vec![0.9, 1.1]);
        let a = sweep(&base, &axis, 3).unwrap();
        let b = sweep(&base, &axis, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].grid_value, 0.9);
        assert_eq!(a[1].grid_value, 1.1);
        assert!(a.iter().all(|p| p.mean_avg_payment > 0.0));

        assert!(matches!(
            sweep(&base, &axis, 0),
            Err(Error::InvalidParameter {
                name: "replications",
                ..
            })
        ));
    }
}
