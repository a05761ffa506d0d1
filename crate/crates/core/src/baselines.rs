//! Comparison mechanisms: a static auction that ignores queue backlogs and
//! a compulsory-rotation auction that forces periodic participation instead
//! of pricing it.

use std::collections::{BTreeMap, BTreeSet};

use crate::auction::{
    assemble_result, critical_payment, greedy_cover, selection_from_run, DenseInstance,
    PaymentProfile, Selection, SlotInstance, SlotResult,
};
use crate::error::{Error, Result};
use crate::model::{ResidualMap, UserId};

/// One slot of the queue-blind mechanism: selection and payments behave as
/// if every backlog were zero. Queues still advance through the recurrence
/// so a caller can track how starved users drift.
pub fn static_slot(instance: &SlotInstance) -> Result<SlotResult> {
    let dense = DenseInstance::new(instance, true)?;
    let run = greedy_cover(
        &dense,
        &dense.requirements,
        &vec![false; dense.user_ids.len()],
    )?;
    let selection = selection_from_run(&dense, &run);
    let profile = crate::auction::payments_for(
        &dense,
        selection.winners.iter().copied(),
        &dense.requirements,
    )?;
    Ok(assemble_result(instance, selection, profile))
}

/// Rotation bookkeeping for the compulsory mechanism.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompulsoryState {
    /// A user is forced into the winner set once they have sat out this many
    /// slots in a row, guaranteeing a participation frequency of at least
    /// one in `deadline`.
    pub deadline: u32,
    pub slots_since_selected: BTreeMap<UserId, u32>,
}

impl CompulsoryState {
    /// Deadline chosen so forced rotation matches the target rate: every
    /// user participates at least once per `ceil(1 / rate)` slots.
    pub fn new(participation_rate: f64) -> Result<Self> {
        if !(participation_rate > 0.0 && participation_rate < 1.0) {
            return Err(Error::InvalidParameter {
                name: "participation_rate",
                value: participation_rate,
                requirement: "in (0, 1)",
            });
        }
        Ok(Self {
            deadline: (1.0 / participation_rate).ceil() as u32,
            slots_since_selected: BTreeMap::new(),
        })
    }

    fn due(&self, user: UserId) -> bool {
        self.slots_since_selected
            .get(&user)
            .is_some_and(|&gap| gap + 1 >= self.deadline)
    }

    fn advance(&mut self, bidders: &[UserId], winners: &BTreeSet<UserId>) {
        for &user in bidders {
            let gap = self.slots_since_selected.entry(user).or_insert(0);
            *gap = if winners.contains(&user) { 0 } else { *gap + 1 };
        }
    }
}

/// Slot result plus which winners were forced rather than chosen on price.
#[derive(Debug, Clone, PartialEq)]
pub struct CompulsoryOutcome {
    pub result: SlotResult,
    pub forced: BTreeSet<UserId>,
}

/// One slot of the compulsory mechanism.
///
/// Bidders who have reached the rotation deadline are selected up front and
/// paid exactly their declared cost. The remaining requirements are filled
/// greedily from the other bidders at critical payments. Queues play no role
/// in selection or pricing; the returned queue states still follow the
/// recurrence for callers that track them.
pub fn compulsory_slot(
    instance: &SlotInstance,
    state: &mut CompulsoryState,
) -> Result<CompulsoryOutcome> {
    let dense = DenseInstance::new(instance, true)?;
    let n = dense.user_ids.len();

    let forced: BTreeSet<UserId> = dense
        .user_ids
        .iter()
        .copied()
        .filter(|&user| state.due(user))
        .collect();

    // Forced users absorb requirements first, in user id order.
    let mut residuals = dense.requirements.clone();
    let mut skip = vec![false; n];
    let mut selection_order: Vec<(UserId, ResidualMap)> = Vec::new();
    for &user in &forced {
        let i = dense
            .index_of(user)
            .expect("forced users come from the bid list");
        selection_order.push((user, dense.residual_map(&residuals)));
        for &j in &dense.caps[i] {
            if residuals[j] > 0 {
                residuals[j] -= 1;
            }
        }
        skip[i] = true;
    }

    let run = greedy_cover(&dense, &residuals, &skip)?;
    let fill_start = residuals;

    let mut winners = forced.clone();
    for pick in &run.picks {
        let user = dense.user_ids[pick.bidder];
        winners.insert(user);
        selection_order.push((user, dense.residual_map(&pick.residuals_before)));
    }

    let mut profile = PaymentProfile {
        payments: BTreeMap::new(),
        defining_user: BTreeMap::new(),
        reserve_priced: BTreeSet::new(),
    };
    for (i, bid) in instance.bids.iter().enumerate() {
        if forced.contains(&bid.user_id) {
            profile
                .payments
                .insert(bid.user_id, bid.declared_cost(instance.config.epsilon));
        } else if winners.contains(&bid.user_id) {
            let (payment, defining, reserved) = critical_payment(&dense, i, &fill_start, &skip)?;
            profile.payments.insert(bid.user_id, payment);
            if let Some(k) = defining {
                profile.defining_user.insert(bid.user_id, dense.user_ids[k]);
            }
            if reserved {
                profile.reserve_priced.insert(bid.user_id);
            }
        }
    }

    state.advance(&dense.user_ids, &winners);

    let selection = Selection {
        winners,
        selection_order,
        final_residuals: dense.residual_map(&run.final_residuals),
    };
    Ok(CompulsoryOutcome {
        result: assemble_result(instance, selection, profile),
        forced,
    })
}
