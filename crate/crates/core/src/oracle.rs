//! Ground-truth solvers for small instances.
//!
//! Exhaustive enumeration of the per-slot covering problem gives the optimal
//! queue-discounted spend and its shifted nonnegative-cost companion. Those
//! optima feed an approximation certificate for the greedy mechanism's total
//! payment, and a probe utility replays misreports to confirm that truthful
//! bidding is dominant. Everything here is deliberately capped at 20 bidders.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{determine_payments, run_slot, select_winners, DenseInstance, SlotInstance};
use crate::error::{Error, Result};
use crate::model::{AccuracySpec, Bid, EngineConfig, Task, TaskId, UserId};

/// Enumeration is 2^n; anything bigger than this is refused.
pub const MAX_ORACLE_USERS: usize = 20;

const TOL: f64 = 1e-9;

/// An optimal subset together with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub value: f64,
    pub selected: BTreeSet<UserId>,
}

/// Optimum of the shifted covering objective, plus the shift itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedSolution {
    pub value: f64,
    /// Largest queue credit among the bidders; added to every virtual cost
    /// so all per-user costs are nonnegative.
    pub shift: f64,
    pub selected: BTreeSet<UserId>,
}

/// Every term of the payment approximation bound, evaluated on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub n_users: usize,
    /// Largest capability size among bidders that declared any task.
    pub theta: u32,
    /// Total report units required across all tasks.
    pub d: u32,
    pub harmonic_d: f64,
    /// Max virtual cost over payment-defining substitutes, divided by the
    /// min shifted cost over all bidders. Zero when nobody wins.
    pub delta_ratio: f64,
    pub m: f64,
    pub p_star: f64,
    pub m_star: f64,
    pub mechanism_payment: f64,
    /// 2 · delta_ratio · theta · d · H_d · (p_star + m · n).
    pub bound_value: f64,
    pub pass: bool,
}

fn check_size(instance: &SlotInstance) -> Result<()> {
    if instance.bids.len() > MAX_ORACLE_USERS {
        return Err(Error::TooLarge {
            n: instance.bids.len(),
            limit: MAX_ORACLE_USERS,
        });
    }
    Ok(())
}

fn infeasible_tasks(dense: &DenseInstance) -> Vec<TaskId> {
    let mut coverers = vec![0u32; dense.requirements.len()];
    for caps in &dense.caps {
        for &j in caps {
            coverers[j] += 1;
        }
    }
    dense
        .requirements
        .iter()
        .enumerate()
        .filter(|&(j, &r)| coverers[j] < r)
        .map(|(j, _)| dense.task_ids[j])
        .collect()
}

/// Exhaustive minimum of Σ cost_i · x_i over subsets meeting every task
/// requirement. Recursive include/exclude walk with an incrementally
/// maintained coverage deficit.
fn enumerate_min(dense: &DenseInstance, costs: &[f64]) -> Result<OracleSolution> {
    let bad = infeasible_tasks(dense);
    if !bad.is_empty() {
        return Err(Error::Infeasible(bad));
    }

    struct Walk<'a> {
        dense: &'a DenseInstance,
        costs: &'a [f64],
        counts: Vec<u32>,
        deficit: u64,
        chosen: Vec<bool>,
        best: f64,
        best_set: Vec<bool>,
    }

    impl Walk<'_> {
        fn add(&mut self, i: usize) {
            for &j in &self.dense.caps[i] {
                if self.counts[j] < self.dense.requirements[j] {
                    self.deficit -= 1;
                }
                self.counts[j] += 1;
            }
        }

        fn remove(&mut self, i: usize) {
            for &j in &self.dense.caps[i] {
                self.counts[j] -= 1;
                if self.counts[j] < self.dense.requirements[j] {
                    self.deficit += 1;
                }
            }
        }

        fn go(&mut self, i: usize, cost: f64) {
            if i == self.costs.len() {
                if self.deficit == 0 && cost < self.best {
                    self.best = cost;
                    self.best_set = self.chosen.clone();
                }
                return;
            }
            self.chosen[i] = true;
            self.add(i);
            self.go(i + 1, cost + self.costs[i]);
            self.remove(i);
            self.chosen[i] = false;
            self.go(i + 1, cost);
        }
    }

    let mut walk = Walk {
        dense,
        costs,
        counts: vec![0; dense.requirements.len()],
        deficit: dense.requirements.iter().map(|&r| u64::from(r)).sum(),
        chosen: vec![false; costs.len()],
        best: f64::INFINITY,
        best_set: Vec::new(),
    };
    walk.go(0, 0.0);

    Ok(OracleSolution {
        value: if walk.best.is_finite() {
            walk.best
        } else {
            0.0
        },
        selected: walk
            .best_set
            .iter()
            .enumerate()
            .filter(|&(_, &chosen)| chosen)
            .map(|(i, _)| dense.user_ids[i])
            .collect(),
    })
}

/// Optimal total virtual cost over all subsets that cover every requirement.
/// This is the offline benchmark the mechanism's payment is measured against.
pub fn brute_force_min_virtual_cost(instance: &SlotInstance) -> Result<OracleSolution> {
    check_size(instance)?;
    let dense = DenseInstance::new(instance, false)?;
    enumerate_min(&dense, &dense.vcost)
}

/// Largest queue credit among the bidders; zero for an empty bid list.
pub fn cost_shift(instance: &SlotInstance) -> f64 {
    instance
        .bids
        .iter()
        .map(|bid| instance.queue_of(bid.user_id) / instance.config.gamma)
        .fold(0.0, f64::max)
}

/// Optimal total shifted cost: every virtual cost raised by the largest
/// queue credit so the covering objective is nonnegative per user.
pub fn brute_force_min_shifted_cost(instance: &SlotInstance) -> Result<ShiftedSolution> {
    check_size(instance)?;
    let dense = DenseInstance::new(instance, false)?;
    let shift = cost_shift(instance);
    let costs: Vec<f64> = dense.vcost.iter().map(|vc| vc + shift).collect();
    let solution = enumerate_min(&dense, &costs)?;
    Ok(ShiftedSolution {
        value: solution.value,
        shift,
        selected: solution.selected,
    })
}

/// Independent check implementation of the virtual-cost optimum: iterative
/// depth-first branch and bound over include/exclude decisions, pruning on a
/// cost lower bound and on coverage feasibility.
pub fn branch_and_bound_min_virtual_cost(instance: &SlotInstance) -> Result<OracleSolution> {
    check_size(instance)?;
    let dense = DenseInstance::new(instance, false)?;
    let bad = infeasible_tasks(&dense);
    if !bad.is_empty() {
        return Err(Error::Infeasible(bad));
    }

    let n = dense.user_ids.len();
    let k = dense.requirements.len();
    // suffix_negative[i]: total negative cost still available from users i..
    let mut suffix_negative = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_negative[i] = suffix_negative[i + 1] + dense.vcost[i].min(0.0);
    }
    // suffix_cover[i][j]: how many of users i.. can cover task j.
    let mut suffix_cover = vec![vec![0u32; k]; n + 1];
    for i in (0..n).rev() {
        suffix_cover[i] = suffix_cover[i + 1].clone();
        for &j in &dense.caps[i] {
            suffix_cover[i][j] += 1;
        }
    }

    #[derive(Clone)]
    struct Node {
        next: usize,
        cost: f64,
        counts: Vec<u32>,
        chosen: Vec<bool>,
    }

    let mut best = f64::INFINITY;
    let mut best_set = vec![false; n];
    let mut stack = vec![Node {
        next: 0,
        cost: 0.0,
        counts: vec![0; k],
        chosen: vec![false; n],
    }];
    while let Some(node) = stack.pop() {
        if node.cost + suffix_negative[node.next] >= best {
            continue;
        }
        let reachable =
            (0..k).all(|j| node.counts[j] + suffix_cover[node.next][j] >= dense.requirements[j]);
        if !reachable {
            continue;
        }
        if node.next == n {
            let feasible = (0..k).all(|j| node.counts[j] >= dense.requirements[j]);
            if feasible && node.cost < best {
                best = node.cost;
                best_set = node.chosen.clone();
            }
            continue;
        }

        let mut include = node.clone();
        include.next += 1;
        include.cost += dense.vcost[node.next];
        include.chosen[node.next] = true;
        for &j in &dense.caps[node.next] {
            include.counts[j] += 1;
        }
        let mut exclude = node;
        exclude.next += 1;
        // Explore the include branch first.
        stack.push(exclude);
        stack.push(include);
    }

    Ok(OracleSolution {
        value: if best.is_finite() { best } else { 0.0 },
        selected: best_set
            .iter()
            .enumerate()
            .filter(|&(_, &chosen)| chosen)
            .map(|(i, _)| dense.user_ids[i])
            .collect(),
    })
}

/// Run the mechanism on a small instance and evaluate every term of the
/// payment approximation bound against the brute-force optima.
///
/// Degenerate instances (a nonpositive min shifted cost, a reserve-priced
/// winner, or defining virtual costs that are not positive) cannot support
/// the ratio in the bound and come back as `DegenerateRatio` so callers can
/// log and skip them.
pub fn certify_bound(instance: &SlotInstance) -> Result<BoundCertificate> {
    check_size(instance)?;
    let dense = DenseInstance::new(instance, false)?;
    let selection = select_winners(instance)?;
    let profile = determine_payments(instance, &selection)?;
    let mechanism_payment: f64 = profile.payments.values().sum();

    let p_star = brute_force_min_virtual_cost(instance)?.value;
    let shifted = brute_force_min_shifted_cost(instance)?;
    let m = shifted.shift;
    let n_users = instance.bids.len();

    let theta = dense
        .caps
        .iter()
        .map(|caps| caps.len() as u32)
        .max()
        .unwrap_or(0);
    let d: u32 = dense.requirements.iter().sum();
    let harmonic_d: f64 = (1..=d).map(|i| 1.0 / f64::from(i)).sum();

    let delta_ratio = if selection.winners.is_empty() {
        0.0
    } else {
        if !profile.reserve_priced.is_empty() {
            return Err(Error::DegenerateRatio(format!(
                "winners {:?} are reserve-priced; no defining substitute exists",
                profile.reserve_priced
            )));
        }
        let min_shifted = dense
            .vcost
            .iter()
            .map(|vc| vc + m)
            .fold(f64::INFINITY, f64::min);
        if min_shifted <= TOL {
            return Err(Error::DegenerateRatio(format!(
                "min shifted cost {min_shifted} is not positive"
            )));
        }
        let max_defining = profile
            .defining_user
            .values()
            .filter_map(|&k| dense.index_of(k))
            .map(|i| dense.vcost[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if !max_defining.is_finite() {
            return Err(Error::DegenerateRatio(
                "no payment-defining substitutes recorded".into(),
            ));
        }
        if max_defining <= TOL {
            return Err(Error::DegenerateRatio(format!(
                "max defining virtual cost {max_defining} is not positive"
            )));
        }
        max_defining / min_shifted
    };

    let bound_value = 2.0
        * delta_ratio
        * f64::from(theta)
        * f64::from(d)
        * harmonic_d
        * (p_star + m * n_users as f64);
    let pass = mechanism_payment <= bound_value + TOL;

    Ok(BoundCertificate {
        n_users,
        theta,
        d,
        harmonic_d,
        delta_ratio,
        m,
        p_star,
        m_star: shifted.value,
        mechanism_payment,
        bound_value,
        pass,
    })
}

impl BoundCertificate {
    /// The shifted optimum never exceeds the payment optimum by more than
    /// the total shift.
    pub fn shift_relation_holds(&self) -> bool {
        self.m_star <= self.p_star + self.m * self.n_users as f64 + TOL
    }
}

/// One misreport that beat truthful bidding; an empty report means the
/// dominant-strategy property held on every probe.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthfulnessViolation {
    pub user: UserId,
    pub misreport: Bid,
    pub truthful_utility: f64,
    pub deviant_utility: f64,
}

fn utility_against_true_cost(
    instance: &SlotInstance,
    bids: &[Bid],
    user: UserId,
    true_cost: f64,
) -> Result<f64> {
    let probe = SlotInstance {
        bids: bids.to_vec(),
        ..instance.clone()
    };
    // A misreport that breaks coverage aborts the auction; the deviator
    // earns nothing in that case.
    let result = match run_slot(&probe) {
        Ok(result) => result,
        Err(Error::Infeasible(_)) => return Ok(0.0),
        Err(other) => return Err(other),
    };
    if result.outcome.winners.contains(&user) {
        Ok(result.outcome.payment_for(user) - true_cost)
    } else {
        Ok(0.0)
    }
}

/// Replay each misreport for one user and compare utilities against the
/// truthful outcome, always measured at the user's true costs. Misreports
/// carrying a different user id are rejected.
pub fn truthfulness_probe(
    instance: &SlotInstance,
    user: UserId,
    misreports: &[Bid],
) -> Result<Vec<TruthfulnessViolation>> {
    let position = instance
        .bids
        .iter()
        .position(|bid| bid.user_id == user)
        .ok_or(Error::InvalidParameter {
            name: "user",
            value: f64::from(user.0),
            requirement: "present in the instance's bid list",
        })?;
    let true_cost = instance.bids[position].declared_cost(instance.config.epsilon);
    let truthful_utility = utility_against_true_cost(instance, &instance.bids, user, true_cost)?;

    let mut violations = Vec::new();
    for misreport in misreports {
        if misreport.user_id != user {
            return Err(Error::InvalidParameter {
                name: "misreports",
                value: f64::from(misreport.user_id.0),
                requirement: "perturb only the probed user",
            });
        }
        let mut bids = instance.bids.clone();
        bids[position] = misreport.clone();
        let deviant_utility = utility_against_true_cost(instance, &bids, user, true_cost)?;
        if deviant_utility > truthful_utility + TOL {
            violations.push(TruthfulnessViolation {
                user,
                misreport: misreport.clone(),
                truthful_utility,
                deviant_utility,
            });
        }
    }
    Ok(violations)
}

/// Random instance generator for oracle and property suites.
///
/// Requirements are drawn strictly below each task's coverer count, so every
/// instance stays feasible even after any single bidder drops out or shrinks
/// their declared task set. Tasks nobody covers get requirement zero.
#[derive(Debug, Clone)]
pub struct InstanceSampler {
    pub max_users: usize,
    pub max_tasks: usize,
    /// Queues are drawn uniformly from [0, max_queue].
    pub max_queue: f64,
    pub config: EngineConfig,
}

impl InstanceSampler {
    /// Regime used by certification runs: queue credits stay well below the
    /// cheapest declared cost, keeping every virtual cost positive.
    pub fn certification(max_users: usize, max_tasks: usize) -> Self {
        Self {
            max_users,
            max_tasks,
            max_queue: 3.0,
            config: EngineConfig::new(1.0, 1.0, 10.0, 0.2, 40.0).unwrap(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SlotInstance {
        let n = rng.gen_range(2..=self.max_users.max(2));
        let k = rng.gen_range(1..=self.max_tasks.max(1));
        let task_ids: Vec<TaskId> = (0..k as u32).map(TaskId).collect();

        let bids: Vec<Bid> = (0..n as u32)
            .map(|i| {
                let mut capability = BTreeSet::new();
                for &task in &task_ids {
                    if rng.gen_bool(0.5) {
                        capability.insert(task);
                    }
                }
                if capability.is_empty() {
                    capability.insert(task_ids[rng.gen_range(0..k)]);
                }
                Bid {
                    user_id: UserId(i),
                    sensing_bid: rng.gen_range(1.0..=2.0),
                    unit_privacy_bid: rng.gen_range(1.0..=2.0),
                    capability,
                }
            })
            .collect();

        let tasks = task_ids
            .iter()
            .map(|&id| {
                let coverers = bids
                    .iter()
                    .filter(|bid| bid.capability.contains(&id))
                    .count() as u32;
                let requirement = if coverers >= 2 {
                    rng.gen_range(1..=coverers - 1)
                } else {
                    0
                };
                Task::with_requirement(
                    id,
                    AccuracySpec {
                        alpha: rng.gen_range(1.0..=2.0),
                        delta: rng.gen_range(0.1..=0.2),
                    },
                    requirement,
                )
            })
            .collect();

        let queues = bids
            .iter()
            .map(|bid| (bid.user_id, rng.gen_range(0.0..=self.max_queue)))
            .collect();

        SlotInstance {
            bids,
            tasks,
            queues,
            config: self.config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn config(gamma: f64, reserve: f64) -> EngineConfig {
        EngineConfig::new(1.0, 1.0, gamma, 0.2, reserve).unwrap()
    }

    fn bid(id: u32, sensing: f64, privacy: f64, tasks: &[u32]) -> Bid {
        Bid {
            user_id: UserId(id),
            sensing_bid: sensing,
            unit_privacy_bid: privacy,
            capability: tasks.iter().map(|&t| TaskId(t)).collect(),
        }
    }

    fn task(id: u32, requirement: u32) -> Task {
        Task::with_requirement(
            TaskId(id),
            AccuracySpec {
                alpha: 1.0,
                delta: 0.2,
            },
            requirement,
        )
    }

    fn two_user_instance(q2: f64, gamma: f64) -> SlotInstance {
        SlotInstance {
            bids: vec![bid(1, 1.0, 0.5, &[0]), bid(2, 2.0, 0.5, &[0])],
            tasks: vec![task(0, 1)],
            queues: BTreeMap::from([(UserId(1), 0.0), (UserId(2), q2)]),
            config: config(gamma, 40.0),
        }
    }

    #[test]
    fn exhaustive_optimum_picks_the_cheapest_cover() {
        let solution = brute_force_min_virtual_cost(&two_user_instance(0.0, 1.0)).unwrap();
        assert_eq!(solution.value, 1.5);
        assert_eq!(solution.selected, BTreeSet::from([UserId(1)]));
    }

    #[test]
    fn queue_credit_moves_the_optimum() {
        let solution = brute_force_min_virtual_cost(&two_user_instance(2.0, 1.0)).unwrap();
        assert_eq!(solution.value, 0.5);
        assert_eq!(solution.selected, BTreeSet::from([UserId(2)]));
    }

    #[test]
    fn zero_requirements_mean_an_empty_optimum() {
        let mut instance = two_user_instance(0.0, 1.0);
        instance.tasks = vec![task(0, 0)];
        let solution = brute_force_min_virtual_cost(&instance).unwrap();
        assert_eq!(solution.value, 0.0);
        assert!(solution.selected.is_empty());
    }

    #[test]
    fn infeasible_and_oversized_instances_are_refused() {
        let mut instance = two_user_instance(0.0, 1.0);
        instance.tasks = vec![task(0, 3)];
        assert!(matches!(
            brute_force_min_virtual_cost(&instance),
            Err(Error::Infeasible(_))
        ));

        let big = SlotInstance {
            bids: (0..21).map(|i| bid(i, 1.0, 0.5, &[0])).collect(),
            tasks: vec![task(0, 1)],
            queues: BTreeMap::new(),
            config: config(1.0, 40.0),
        };
        assert!(matches!(
            brute_force_min_virtual_cost(&big),
            Err(Error::TooLarge { n: 21, limit: 20 })
        ));
    }

    #[test]
    fn shift_vanishes_at_zero_queues() {
        let instance = two_user_instance(0.0, 1.0);
        let p = brute_force_min_virtual_cost(&instance).unwrap();
        let s = brute_force_min_shifted_cost(&instance).unwrap();
        assert_eq!(s.shift, 0.0);
        assert_eq!(s.value, p.value);
    }

    #[test]
    fn shifted_objective_example() {
        // q = (0, 2) at gamma 1: shift 2, shifted costs 3.5 and 2.5.
        let s = brute_force_min_shifted_cost(&two_user_instance(2.0, 1.0)).unwrap();
        assert_eq!(s.shift, 2.0);
        assert_eq!(s.value, 2.5);
        assert_eq!(s.selected, BTreeSet::from([UserId(2)]));
        // Shift relation: 2.5 <= 0.5 + 2 * 2.
        let p = brute_force_min_virtual_cost(&two_user_instance(2.0, 1.0)).unwrap();
        assert!(s.value <= p.value + s.shift * 2.0 + 1e-9);
    }

    #[test]
    fn certificate_hand_example() {
        let cert = certify_bound(&two_user_instance(0.0, 1.0)).unwrap();
        assert_eq!(cert.n_users, 2);
        assert_eq!(cert.theta, 1);
        assert_eq!(cert.d, 1);
        assert_eq!(cert.harmonic_d, 1.0);
        assert_eq!(cert.m, 0.0);
        assert_eq!(cert.p_star, 1.5);
        assert_eq!(cert.m_star, 1.5);
        assert_eq!(cert.mechanism_payment, 2.5);
        assert!((cert.delta_ratio - 2.5 / 1.5).abs() < 1e-12);
        assert!((cert.bound_value - 5.0).abs() < 1e-12);
        assert!(cert.pass);
        assert!(cert.shift_relation_holds());
    }

    #[test]
    fn empty_winner_set_passes_trivially() {
        let mut instance = two_user_instance(0.0, 1.0);
        instance.tasks = vec![task(0, 0)];
        let cert = certify_bound(&instance).unwrap();
        assert_eq!(cert.mechanism_payment, 0.0);
        assert_eq!(cert.delta_ratio, 0.0);
        assert_eq!(cert.bound_value, 0.0);
        assert!(cert.pass);
    }

    #[test]
    fn zero_min_shifted_cost_is_degenerate() {
        // A free bidder holding the largest queue puts the min shifted cost
        // at exactly zero.
        let instance = SlotInstance {
            bids: vec![bid(1, 0.0, 0.0, &[0]), bid(2, 2.0, 0.5, &[0])],
            tasks: vec![task(0, 1)],
            queues: BTreeMap::from([(UserId(1), 1.0), (UserId(2), 0.0)]),
            config: config(1.0, 40.0),
        };
        assert!(matches!(
            certify_bound(&instance),
            Err(Error::DegenerateRatio(_))
        ));
    }

    #[test]
    fn reserve_priced_winners_are_degenerate() {
        let instance = SlotInstance {
            bids: vec![bid(1, 1.0, 0.5, &[0])],
            tasks: vec![task(0, 1)],
            queues: BTreeMap::new(),
            config: config(1.0, 40.0),
        };
        assert!(matches!(
            certify_bound(&instance),
            Err(Error::DegenerateRatio(_))
        ));
    }

    #[test]
    fn certified_sampler_instances_never_violate_the_bound() {
        let sampler = InstanceSampler::certification(8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut certified = 0;
        for _ in 0..60 {
            let instance = sampler.sample(&mut rng);
            match certify_bound(&instance) {
                Ok(cert) => {
                    assert!(cert.pass, "bound violated: {cert:?}");
                    assert!(cert.shift_relation_holds(), "shift relation: {cert:?}");
                    certified += 1;
                }
                Err(Error::DegenerateRatio(_)) => {}
                Err(other) => panic!("unexpected error: {other:?}"),
            }
        }
        assert!(
            certified >= 50,
            "only {certified} of 60 instances certified"
        );
    }

    #[test]
    fn the_two_optimizers_agree() {
        let sampler = InstanceSampler {
            max_users: 9,
            max_tasks: 4,
            max_queue: 12.0,
            config: config(2.0, 40.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let instance = sampler.sample(&mut rng);
            let a = brute_force_min_virtual_cost(&instance).unwrap();
            let b = branch_and_bound_min_virtual_cost(&instance).unwrap();
            assert!(
                (a.value - b.value).abs() < 1e-9,
                "optima differ: {} vs {}",
                a.value,
                b.value
            );
        }
    }

    #[test]
    fn sampler_leaves_slack_around_every_requirement() {
        let sampler = InstanceSampler::certification(10, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let instance = sampler.sample(&mut rng);
            for t in &instance.tasks {
                let coverers = instance
                    .bids
                    .iter()
                    .filter(|bid| bid.capability.contains(&t.id))
                    .count() as u32;
                assert!(t.requirement == 0 || coverers > t.requirement);
            }
            select_winners(&instance).unwrap();
        }
    }

    #[test]
    fn overbidding_cannot_beat_truth() {
        let instance = two_user_instance(0.0, 1.0);
        let misreports = vec![bid(1, 2.0, 0.5, &[0]), bid(1, 5.0, 0.5, &[0])];
        let report = truthfulness_probe(&instance, UserId(1), &misreports).unwrap();
        assert!(report.is_empty());
    }

    #[test]
    fn underbidding_cannot_beat_truth() {
        let instance = two_user_instance(0.0, 1.0);
        let misreports: Vec<Bid> = (0..20)
            .map(|i| bid(1, 0.1 * f64::from(i), 0.5, &[0]))
            .collect();
        let report = truthfulness_probe(&instance, UserId(1), &misreports).unwrap();
        assert!(report.is_empty());
    }

    #[test]
    fn misreports_for_another_user_are_rejected() {
        let instance = two_user_instance(0.0, 1.0);
        assert!(truthfulness_probe(&instance, UserId(1), &[bid(2, 1.0, 0.5, &[0])]).is_err());
        assert!(truthfulness_probe(&instance, UserId(9), &[]).is_err());
    }

    #[test]
    fn probe_reports_a_genuine_violation() {
        // A monopolist priced at a zero reserve earns negative utility when
        // truthful; declaring no tasks and sitting out is strictly better.
        // The probe must flag exactly that.
        let instance = SlotInstance {
            bids: vec![bid(1, 1.0, 0.5, &[0])],
            tasks: vec![task(0, 1)],
            queues: BTreeMap::new(),
            config: config(1.0, 0.0),
        };
        let opt_out = bid(1, 1.0, 0.5, &[]);
        let report = truthfulness_probe(&instance, UserId(1), &[opt_out]).unwrap();
        assert_eq!(report.len(), 1);
        assert!((report[0].truthful_utility + 1.5).abs() < 1e-12);
        assert_eq!(report[0].deviant_utility, 0.0);
    }

    #[test]
    fn random_probes_find_no_violations() {
        let sampler = InstanceSampler::certification(7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let instance = sampler.sample(&mut rng);
            for position in 0..instance.bids.len() {
                let truth = instance.bids[position].clone();
                let mut misreports = Vec::new();
                for scale in [0.5, 0.9, 1.1, 2.0] {
                    let mut b = truth.clone();
                    b.sensing_bid = truth.sensing_bid * scale;
                    misreports.push(b);
                    let mut b = truth.clone();
                    b.unit_privacy_bid = truth.unit_privacy_bid * scale;
                    misreports.push(b);
                }
                if truth.capability.len() > 1 {
                    let mut b = truth.clone();
                    let drop = *b.capability.iter().next().unwrap();
                    b.capability.remove(&drop);
                    misreports.push(b);
                }
                let report = truthfulness_probe(&instance, truth.user_id, &misreports).unwrap();
                assert!(report.is_empty(), "violations: {report:?}");
            }
        }
    }
}
