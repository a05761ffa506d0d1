//! Shared domain types: users, tasks, bids, engine parameters, and the
//! per-slot bookkeeping helpers (accuracy requirements, queue updates,
//! utilities, payment totals).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a participating user. Ordering is the tie-break order used
/// by the winner-selection loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// Identifier of a sensing task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Per-task aggregation accuracy target: the aggregate error must stay below
/// `alpha` with probability at least `1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySpec {
    pub alpha: f64,
    pub delta: f64,
}

impl AccuracySpec {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                requirement: "positive and finite",
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: delta,
                requirement: "in (0, 1)",
            });
        }
        Ok(Self { alpha, delta })
    }
}

/// Minimum number of perturbed reports needed to hit an accuracy target when
/// every report carries Laplace noise of scale `zeta / epsilon`.
///
/// Computed as `ceil(2 * zeta / (epsilon^2 * alpha^2 * delta))`; the ceiling
/// keeps the count integral, so each extra report always retires exactly one
/// residual unit.
pub fn accuracy_requirement(spec: &AccuracySpec, epsilon: f64, zeta: f64) -> Result<u32> {
    AccuracySpec::new(spec.alpha, spec.delta)?;
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            requirement: "positive and finite",
        });
    }
    if !zeta.is_finite() || zeta <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "zeta",
            value: zeta,
            requirement: "positive and finite",
        });
    }
    let raw = 2.0 * zeta / (epsilon * epsilon * spec.alpha * spec.alpha * spec.delta);
    Ok(raw.ceil() as u32)
}

/// A sensing task together with its currently required number of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub spec: AccuracySpec,
    pub requirement: u32,
}

impl Task {
    /// Task whose requirement is derived from its accuracy target.
    pub fn calibrated(id: TaskId, spec: AccuracySpec, epsilon: f64, zeta: f64) -> Result<Self> {
        let requirement = accuracy_requirement(&spec, epsilon, zeta)?;
        Ok(Self {
            id,
            spec,
            requirement,
        })
    }

    /// Task with an explicitly chosen requirement.
    pub fn with_requirement(id: TaskId, spec: AccuracySpec, requirement: u32) -> Self {
        Self {
            id,
            spec,
            requirement,
        }
    }
}

/// A participating user with private costs, declared capability, and the
/// bookkeeping the harness maintains across slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    /// True cost of performing the sensing work once.
    pub sensing_cost: f64,
    /// True cost per unit of privacy budget consumed.
    pub unit_privacy_cost: f64,
    /// Tasks this user is able to execute.
    pub capability: BTreeSet<TaskId>,
    /// Virtual backlog of unserved participation demand.
    pub queue: f64,
    pub alive: bool,
    /// Consecutive slots without being selected; drives dropout.
    pub consecutive_unselected: u32,
}

impl User {
    pub fn new(
        id: UserId,
        sensing_cost: f64,
        unit_privacy_cost: f64,
        capability: BTreeSet<TaskId>,
    ) -> Self {
        Self {
            id,
            sensing_cost,
            unit_privacy_cost,
            capability,
            queue: 0.0,
            alive: true,
            consecutive_unselected: 0,
        }
    }

    /// Bid that reports the true costs and true capability.
    pub fn truthful_bid(&self) -> Bid {
        Bid {
            user_id: self.id,
            sensing_bid: self.sensing_cost,
            unit_privacy_bid: self.unit_privacy_cost,
            capability: self.capability.clone(),
        }
    }
}

/// A declared (not necessarily truthful) offer for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub user_id: UserId,
    pub sensing_bid: f64,
    pub unit_privacy_bid: f64,
    pub capability: BTreeSet<TaskId>,
}

impl Bid {
    /// Declared compensation demand at privacy level `epsilon`.
    pub fn declared_cost(&self, epsilon: f64) -> f64 {
        self.sensing_bid + self.unit_privacy_bid * epsilon
    }
}

/// Global mechanism parameters, fixed for the lifetime of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Per-report privacy budget.
    pub epsilon: f64,
    /// Half-width of the sensed value range; calibrates the noise scale.
    pub zeta: f64,
    /// Weight trading payment optimality against queue drift. Larger values
    /// favor cheap winner sets; smaller values favor starving queues.
    pub gamma: f64,
    /// Long-term selection frequency promised to every user.
    pub participation_rate: f64,
    /// Payment handed to a winner whose removal makes coverage infeasible.
    pub reserve_price: f64,
}

impl EngineConfig {
    pub fn new(
        epsilon: f64,
        zeta: f64,
        gamma: f64,
        participation_rate: f64,
        reserve_price: f64,
    ) -> Result<Self> {
        let config = Self {
            epsilon,
            zeta,
            gamma,
            participation_rate,
            reserve_price,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("epsilon", self.epsilon),
            ("zeta", self.zeta),
            ("gamma", self.gamma),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    requirement: "positive and finite",
                });
            }
        }
        if !(self.participation_rate > 0.0 && self.participation_rate < 1.0) {
            return Err(Error::InvalidParameter {
                name: "participation_rate",
                value: self.participation_rate,
                requirement: "in (0, 1)",
            });
        }
        if !self.reserve_price.is_finite() || self.reserve_price < 0.0 {
            return Err(Error::InvalidParameter {
                name: "reserve_price",
                value: self.reserve_price,
                requirement: "nonnegative and finite",
            });
        }
        Ok(())
    }
}

/// Remaining report requirement per task while a selection is in progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualMap(BTreeMap<TaskId, u32>);

impl ResidualMap {
    pub fn from_tasks(tasks: &[Task]) -> Self {
        Self(
            tasks
                .iter()
                .map(|task| (task.id, task.requirement))
                .collect(),
        )
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (TaskId, u32)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    pub fn get(&self, task: TaskId) -> u32 {
        self.0.get(&task).copied().unwrap_or(0)
    }

    /// Total outstanding report units.
    pub fn total(&self) -> u64 {
        self.0.values().map(|&r| u64::from(r)).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.0.values().all(|&r| r == 0)
    }

    /// Retire one residual unit from every still-outstanding task the given
    /// capability covers; returns how many units were retired.
    pub fn absorb(&mut self, capability: &BTreeSet<TaskId>) -> u32 {
        let mut retired = 0;
        for task in capability {
            if let Some(r) = self.0.get_mut(task) {
                if *r > 0 {
                    *r -= 1;
                    retired += 1;
                }
            }
        }
        retired
    }

    /// Tasks whose residual is still positive.
    pub fn outstanding(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.0.iter().filter(|(_, &r)| r > 0).map(|(&task, _)| task)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskId, u32)> + '_ {
        self.0.iter().map(|(&task, &r)| (task, r))
    }
}

/// Everything the mechanism decided in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub winners: BTreeSet<UserId>,
    /// Payment per winner; users absent from the map are paid nothing.
    pub payments: BTreeMap<UserId, f64>,
    /// Winners in pick order, each with the residual map seen at the moment
    /// of that pick.
    pub selection_order: Vec<(UserId, ResidualMap)>,
    /// Winners that had to be paid the reserve price because removing them
    /// left the tasks uncoverable.
    pub reserve_priced: BTreeSet<UserId>,
}

impl SlotOutcome {
    pub fn payment_for(&self, user: UserId) -> f64 {
        self.payments.get(&user).copied().unwrap_or(0.0)
    }
}

/// One step of the virtual queue recurrence: serve at most one unit when
/// selected, then admit `participation_rate` units of fresh demand.
///
/// The result is always at least `participation_rate`.
pub fn queue_update(queue: f64, selected: bool, participation_rate: f64) -> f64 {
    let served = if selected { 1.0 } else { 0.0 };
    (queue - served).max(0.0) + participation_rate
}

/// Quasi-linear utility of a user under a given payment and selection flag.
/// Unselected users earn exactly zero.
pub fn user_utility(payment: f64, user: &User, epsilon: f64, selected: bool) -> f64 {
    if selected {
        payment - user.sensing_cost - user.unit_privacy_cost * epsilon
    } else {
        0.0
    }
}

/// Sum of all payments in a slot outcome.
pub fn total_payment(outcome: &SlotOutcome) -> f64 {
    outcome.payments.values().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha: f64, delta: f64) -> AccuracySpec {
        AccuracySpec { alpha, delta }
    }

    #[test]
    fn requirement_matches_hand_computed_values() {
        assert_eq!(accuracy_requirement(&spec(1.0, 0.2), 1.0, 1.0).unwrap(), 10);
        // Doubling alpha quarters the pre-ceiling value: 10 / 4 = 2.5 -> 3.
        assert_eq!(accuracy_requirement(&spec(2.0, 0.2), 1.0, 1.0).unwrap(), 3);
    }

    #[test]
    fn requirement_rejects_out_of_range_parameters() {
        assert!(accuracy_requirement(&spec(1.0, 0.2), 0.0, 1.0).is_err());
        assert!(accuracy_requirement(&spec(1.0, 0.2), -1.0, 1.0).is_err());
        assert!(accuracy_requirement(&spec(1.0, 0.2), 1.0, 0.0).is_err());
        assert!(accuracy_requirement(&spec(-1.0, 0.2), 1.0, 1.0).is_err());
        assert!(accuracy_requirement(&spec(1.0, 0.0), 1.0, 1.0).is_err());
        assert!(accuracy_requirement(&spec(1.0, 1.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn requirement_is_monotone_in_each_parameter() {
        let base = accuracy_requirement(&spec(1.2, 0.15), 1.0, 1.0).unwrap();
        assert!(accuracy_requirement(&spec(1.2, 0.15), 1.0, 2.0).unwrap() >= base);
        assert!(accuracy_requirement(&spec(1.2, 0.15), 2.0, 1.0).unwrap() <= base);
        assert!(accuracy_requirement(&spec(2.4, 0.15), 1.0, 1.0).unwrap() <= base);
        assert!(accuracy_requirement(&spec(1.2, 0.3), 1.0, 1.0).unwrap() <= base);
    }

    #[test]
    fn queue_update_examples() {
        assert_eq!(queue_update(0.0, false, 0.2), 0.2);
        assert_eq!(queue_update(0.5, true, 0.2), 0.2);
        assert_eq!(queue_update(1.0, false, 0.2), 1.2);
        // Serving more than the backlog clamps at zero before admission.
        assert_eq!(queue_update(0.3, true, 0.2), 0.2);
    }

    #[test]
    fn queue_update_never_falls_below_admission() {
        for &q in &[0.0, 0.1, 0.7, 3.0, 100.0] {
            for &sel in &[false, true] {
                assert!(queue_update(q, sel, 0.2) >= 0.2);
            }
        }
    }

    #[test]
    fn utility_examples() {
        let user = User::new(UserId(1), 1.0, 0.5, BTreeSet::from([TaskId(0)]));
        assert_eq!(user_utility(2.5, &user, 1.0, true), 1.0);
        assert_eq!(user_utility(2.5, &user, 1.0, false), 0.0);
        // Payment exactly at cost gives zero utility.
        assert_eq!(user_utility(1.5, &user, 1.0, true), 0.0);
    }

    #[test]
    fn total_payment_sums_winner_payments() {
        let mut outcome = SlotOutcome {
            winners: BTreeSet::from([UserId(1)]),
            payments: BTreeMap::from([(UserId(1), 2.5)]),
            selection_order: Vec::new(),
            reserve_priced: BTreeSet::new(),
        };
        assert_eq!(total_payment(&outcome), 2.5);

        outcome.winners.insert(UserId(2));
        outcome.payments.insert(UserId(2), 3.0);
        assert_eq!(total_payment(&outcome), 5.5);

        let empty = SlotOutcome {
            winners: BTreeSet::new(),
            payments: BTreeMap::new(),
            selection_order: Vec::new(),
            reserve_priced: BTreeSet::new(),
        };
        assert_eq!(total_payment(&empty), 0.0);
    }

    #[test]
    fn residual_map_absorbs_once_per_outstanding_task() {
        let tasks = vec![
            Task::with_requirement(TaskId(0), spec(1.0, 0.2), 2),
            Task::with_requirement(TaskId(1), spec(1.0, 0.2), 0),
            Task::with_requirement(TaskId(2), spec(1.0, 0.2), 1),
        ];
        let mut residuals = ResidualMap::from_tasks(&tasks);
        assert_eq!(residuals.total(), 3);

        let capability = BTreeSet::from([TaskId(0), TaskId(1), TaskId(2)]);
        assert_eq!(residuals.absorb(&capability), 2);
        assert_eq!(residuals.get(TaskId(0)), 1);
        assert_eq!(residuals.get(TaskId(1)), 0);
        assert_eq!(residuals.get(TaskId(2)), 0);

        assert_eq!(residuals.absorb(&capability), 1);
        assert!(residuals.is_complete());
    }

    #[test]
    fn engine_config_validation() {
        assert!(EngineConfig::new(1.0, 1.0, 10.0, 0.2, 40.0).is_ok());
        assert!(EngineConfig::new(0.0, 1.0, 10.0, 0.2, 40.0).is_err());
        assert!(EngineConfig::new(1.0, 1.0, 0.0, 0.2, 40.0).is_err());
        assert!(EngineConfig::new(1.0, 1.0, 10.0, 1.5, 40.0).is_err());
        assert!(EngineConfig::new(1.0, 1.0, 10.0, 0.2, -1.0).is_err());
    }
}
