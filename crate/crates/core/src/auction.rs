//! Reverse auction for one time slot: queue-discounted greedy winner
//! selection, critical payments, and the queue drift bound.
//!
//! Selection repeatedly picks the bidder minimizing
//! `virtual_cost / coverage`, where coverage counts the bidder's declared
//! tasks that still need reports, until every task requirement is met.
//! A winner's payment is found by rerunning the selection without them and
//! taking the best threshold at which they would still have displaced one of
//! the substitute picks; the winner's own queue credit is added back so the
//! payment compensates the declared costs rather than the discounted ones.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{Bid, EngineConfig, ResidualMap, SlotOutcome, Task, TaskId, UserId};

/// All inputs the mechanism needs for one slot.
///
/// Bidders must carry distinct user ids. Queue entries default to zero for
/// bidders absent from `queues`; capability entries that reference unknown
/// tasks are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInstance {
    pub bids: Vec<Bid>,
    pub tasks: Vec<Task>,
    pub queues: BTreeMap<UserId, f64>,
    pub config: EngineConfig,
}

impl SlotInstance {
    pub fn queue_of(&self, user: UserId) -> f64 {
        self.queues.get(&user).copied().unwrap_or(0.0)
    }
}

/// Winner set in pick order with the residual state at each pick.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub winners: BTreeSet<UserId>,
    /// Winners in the order picked, each with the residual map seen at the
    /// moment of the pick (before that winner absorbed anything).
    pub selection_order: Vec<(UserId, ResidualMap)>,
    pub final_residuals: ResidualMap,
}

/// Payments plus the provenance needed by the approximation certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentProfile {
    pub payments: BTreeMap<UserId, f64>,
    /// For each winner, the substitute pick whose scaled virtual cost set the
    /// payment. Absent when no substitute term exceeded zero or the winner
    /// was reserve-priced.
    pub defining_user: BTreeMap<UserId, UserId>,
    /// Winners paid the reserve price because coverage fails without them.
    pub reserve_priced: BTreeSet<UserId>,
}

/// Outcome of a full slot plus the queue states entering the next slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotResult {
    pub outcome: SlotOutcome,
    pub next_queues: BTreeMap<UserId, f64>,
}

/// Queue-discounted cost of accepting this bid: the declared compensation
/// minus the bidder's backlog credit. Unbounded below by design.
pub fn virtual_cost(bid: &Bid, queue: f64, config: &EngineConfig) -> f64 {
    bid.declared_cost(config.epsilon) - queue / config.gamma
}

/// Number of declared tasks that still need at least one report.
pub fn coverage(bid: &Bid, residuals: &ResidualMap) -> u32 {
    bid.capability
        .iter()
        .filter(|&&task| residuals.get(task) > 0)
        .count() as u32
}

/// Index-based view of a slot instance used by the selection loops.
pub(crate) struct DenseInstance {
    pub user_ids: Vec<UserId>,
    pub vcost: Vec<f64>,
    /// Task indices each bidder covers.
    pub caps: Vec<Vec<usize>>,
    pub queues: Vec<f64>,
    pub task_ids: Vec<TaskId>,
    pub requirements: Vec<u32>,
    pub gamma: f64,
    pub reserve_price: f64,
}

impl DenseInstance {
    pub(crate) fn new(instance: &SlotInstance, zero_queues: bool) -> Result<Self> {
        instance.config.validate()?;
        let task_index: BTreeMap<TaskId, usize> = instance
            .tasks
            .iter()
            .enumerate()
            .map(|(j, task)| (task.id, j))
            .collect();

        let n = instance.bids.len();
        let mut user_ids = Vec::with_capacity(n);
        let mut vcost = Vec::with_capacity(n);
        let mut caps = Vec::with_capacity(n);
        let mut queues = Vec::with_capacity(n);
        let mut seen = BTreeSet::new();
        for bid in &instance.bids {
            if !seen.insert(bid.user_id) {
                return Err(Error::InvalidParameter {
                    name: "bids",
                    value: bid.user_id.0 as f64,
                    requirement: "unique per user id",
                });
            }
            let queue = if zero_queues {
                0.0
            } else {
                instance.queue_of(bid.user_id)
            };
            user_ids.push(bid.user_id);
            queues.push(queue);
            vcost.push(virtual_cost(bid, queue, &instance.config));
            caps.push(
                bid.capability
                    .iter()
                    .filter_map(|task| task_index.get(task).copied())
                    .collect(),
            );
        }

        Ok(Self {
            user_ids,
            vcost,
            caps,
            queues,
            task_ids: instance.tasks.iter().map(|t| t.id).collect(),
            requirements: instance.tasks.iter().map(|t| t.requirement).collect(),
            gamma: instance.config.gamma,
            reserve_price: instance.config.reserve_price,
        })
    }

    fn coverage_at(&self, bidder: usize, residuals: &[u32]) -> u32 {
        self.caps[bidder]
            .iter()
            .filter(|&&j| residuals[j] > 0)
            .count() as u32
    }

    pub(crate) fn residual_map(&self, residuals: &[u32]) -> ResidualMap {
        ResidualMap::from_pairs(
            self.task_ids
                .iter()
                .zip(residuals)
                .map(|(&task, &r)| (task, r)),
        )
    }

    pub(crate) fn index_of(&self, user: UserId) -> Option<usize> {
        self.user_ids.iter().position(|&id| id == user)
    }
}

pub(crate) struct GreedyPick {
    pub bidder: usize,
    /// Residual state immediately before this pick.
    pub residuals_before: Vec<u32>,
    /// The pick's coverage under that residual state; always positive.
    pub coverage: u32,
}

pub(crate) struct GreedyRun {
    pub picks: Vec<GreedyPick>,
    pub final_residuals: Vec<u32>,
}

/// Greedy cover from an arbitrary residual start, skipping excluded bidders.
///
/// Errors with the uncoverable task list when the non-skipped bidders cannot
/// meet the start residuals; this pre-check also guarantees the loop always
/// finds a positive-coverage candidate.
pub(crate) fn greedy_cover(
    dense: &DenseInstance,
    start: &[u32],
    skip: &[bool],
) -> Result<GreedyRun> {
    let mut coverers = vec![0u32; start.len()];
    for (i, caps) in dense.caps.iter().enumerate() {
        if skip[i] {
            continue;
        }
        for &j in caps {
            coverers[j] += 1;
        }
    }
    let uncoverable: Vec<TaskId> = start
        .iter()
        .enumerate()
        .filter(|&(j, &r)| coverers[j] < r)
        .map(|(j, _)| dense.task_ids[j])
        .collect();
    if !uncoverable.is_empty() {
        return Err(Error::Infeasible(uncoverable));
    }

    let mut residuals = start.to_vec();
    let mut outstanding: u64 = residuals.iter().map(|&r| u64::from(r)).sum();
    let mut picked = skip.to_vec();
    let mut picks = Vec::new();
    while outstanding > 0 {
        let mut best: Option<(f64, UserId, usize, u32)> = None;
        for (i, &user) in dense.user_ids.iter().enumerate() {
            if picked[i] {
                continue;
            }
            let cov = dense.coverage_at(i, &residuals);
            if cov == 0 {
                continue;
            }
            let ratio = dense.vcost[i] / f64::from(cov);
            let candidate = (ratio, user, i, cov);
            best = match best {
                None => Some(candidate),
                Some(current) => {
                    if ratio < current.0 || (ratio == current.0 && candidate.1 < current.1) {
                        Some(candidate)
                    } else {
                        Some(current)
                    }
                }
            };
        }
        let (_, _, bidder, cov) =
            best.expect("feasibility pre-check guarantees a coverable candidate");
        let residuals_before = residuals.clone();
        for &j in &dense.caps[bidder] {
            if residuals[j] > 0 {
                residuals[j] -= 1;
                outstanding -= 1;
            }
        }
        picked[bidder] = true;
        picks.push(GreedyPick {
            bidder,
            residuals_before,
            coverage: cov,
        });
    }

    Ok(GreedyRun {
        picks,
        final_residuals: residuals,
    })
}

/// Critical payment for one winner: rerun the greedy without them and take
/// the best displacement threshold over the substitute picks, adding back
/// the winner's queue credit. Falls back to the reserve price when the rerun
/// is infeasible.
pub(crate) fn critical_payment(
    dense: &DenseInstance,
    winner: usize,
    start: &[u32],
    base_skip: &[bool],
) -> Result<(f64, Option<usize>, bool)> {
    let mut skip = base_skip.to_vec();
    skip[winner] = true;
    let rerun = match greedy_cover(dense, start, &skip) {
        Ok(run) => run,
        Err(Error::Infeasible(_)) => return Ok((dense.reserve_price, None, true)),
        Err(other) => return Err(other),
    };

    let credit = dense.queues[winner] / dense.gamma;
    let mut payment = 0.0;
    let mut defining = None;
    for pick in &rerun.picks {
        let winner_cov = dense.coverage_at(winner, &pick.residuals_before);
        let term =
            f64::from(winner_cov) / f64::from(pick.coverage) * dense.vcost[pick.bidder] + credit;
        if term > payment {
            payment = term;
            defining = Some(pick.bidder);
        }
    }
    Ok((payment, defining, false))
}

/// Pick winners until every task requirement is covered.
pub fn select_winners(instance: &SlotInstance) -> Result<Selection> {
    let dense = DenseInstance::new(instance, false)?;
    let run = greedy_cover(
        &dense,
        &dense.requirements,
        &vec![false; dense.user_ids.len()],
    )?;
    Ok(selection_from_run(&dense, &run))
}

pub(crate) fn selection_from_run(dense: &DenseInstance, run: &GreedyRun) -> Selection {
    let selection_order: Vec<(UserId, ResidualMap)> = run
        .picks
        .iter()
        .map(|pick| {
            (
                dense.user_ids[pick.bidder],
                dense.residual_map(&pick.residuals_before),
            )
        })
        .collect();
    Selection {
        winners: selection_order.iter().map(|(id, _)| *id).collect(),
        selection_order,
        final_residuals: dense.residual_map(&run.final_residuals),
    }
}

/// Critical payment for every winner of a selection.
pub fn determine_payments(
    instance: &SlotInstance,
    selection: &Selection,
) -> Result<PaymentProfile> {
    let dense = DenseInstance::new(instance, false)?;
    payments_for(
        &dense,
        selection.winners.iter().copied(),
        &dense.requirements,
    )
}

pub(crate) fn payments_for(
    dense: &DenseInstance,
    winners: impl Iterator<Item = UserId>,
    start: &[u32],
) -> Result<PaymentProfile> {
    let base_skip = vec![false; dense.user_ids.len()];
    let mut profile = PaymentProfile {
        payments: BTreeMap::new(),
        defining_user: BTreeMap::new(),
        reserve_priced: BTreeSet::new(),
    };
    for user in winners {
        let winner = dense
            .index_of(user)
            .expect("winners originate from the bid list");
        let (payment, defining, reserved) = critical_payment(dense, winner, start, &base_skip)?;
        profile.payments.insert(user, payment);
        if let Some(k) = defining {
            profile.defining_user.insert(user, dense.user_ids[k]);
        }
        if reserved {
            profile.reserve_priced.insert(user);
        }
    }
    Ok(profile)
}

/// Run one full slot: select winners, price them, and advance every
/// bidder's queue by one recurrence step.
pub fn run_slot(instance: &SlotInstance) -> Result<SlotResult> {
    let selection = select_winners(instance)?;
    let profile = determine_payments(instance, &selection)?;
    Ok(assemble_result(instance, selection, profile))
}

pub(crate) fn assemble_result(
    instance: &SlotInstance,
    selection: Selection,
    profile: PaymentProfile,
) -> SlotResult {
    let next_queues = instance
        .bids
        .iter()
        .map(|bid| {
            let selected = selection.winners.contains(&bid.user_id);
            (
                bid.user_id,
                crate::model::queue_update(
                    instance.queue_of(bid.user_id),
                    selected,
                    instance.config.participation_rate,
                ),
            )
        })
        .collect();
    SlotResult {
        outcome: SlotOutcome {
            winners: selection.winners,
            payments: profile.payments,
            selection_order: selection.selection_order,
            reserve_priced: profile.reserve_priced,
        },
        next_queues,
    }
}

/// Exact one-slot change of the quadratic queue potential together with its
/// analytic upper bound. The bound holds for every queue state and selection
/// vector.
pub fn drift_exact_and_bound(queues: &[f64], selected: &[bool], d: f64) -> (f64, f64) {
    assert_eq!(queues.len(), selected.len());
    let mut exact = 0.0;
    let mut bound = 0.0;
    for (&q, &sel) in queues.iter().zip(selected) {
        let next = crate::model::queue_update(q, sel, d);
        exact += 0.5 * (next * next - q * q);
        let x = if sel { 1.0 } else { 0.0 };
        bound += (d * d + 1.0) / 2.0 + q * d - q * x;
    }
    (exact, bound)
}
