use serde::{Deserialize, Serialize};

use crate::traffic_world::ScenarioKind;

/// Discrete meta-actions. Each scenario uses its own contiguous subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionId {
    MaintainLane,
    AccelInLane,
    DecelInLane,
    LaneChangeLeft,
    LaneChangeRight,
    Stop,
    Creep,
    Proceed,
    ProceedFast,
}

const HIGHWAY_ACTIONS: [ActionId; 5] = [
    ActionId::MaintainLane,
    ActionId::AccelInLane,
    ActionId::DecelInLane,
    ActionId::LaneChangeLeft,
    ActionId::LaneChangeRight,
];

const T_ACTIONS: [ActionId; 4] = [
    ActionId::Stop,
    ActionId::Creep,
    ActionId::Proceed,
    ActionId::ProceedFast,
];

pub fn action_set(kind: ScenarioKind) -> &'static [ActionId] {
    match kind {
        ScenarioKind::MultiLaneHighway => &HIGHWAY_ACTIONS,
        ScenarioKind::UnsignalizedTIntersection => &T_ACTIONS,
    }
}

impl ActionId {
    /// Position of the action in its scenario's action set.
    pub fn index(self) -> usize {
        match self {
            ActionId::MaintainLane | ActionId::Stop => 0,
            ActionId::AccelInLane | ActionId::Creep => 1,
            ActionId::DecelInLane | ActionId::Proceed => 2,
            ActionId::LaneChangeLeft | ActionId::ProceedFast => 3,
            ActionId::LaneChangeRight => 4,
        }
    }

    pub fn from_index(kind: ScenarioKind, index: usize) -> Option<ActionId> {
        action_set(kind).get(index).copied()
    }

    pub fn scenario(self) -> ScenarioKind {
        match self {
            ActionId::MaintainLane
            | ActionId::AccelInLane
            | ActionId::DecelInLane
            | ActionId::LaneChangeLeft
            | ActionId::LaneChangeRight => ScenarioKind::MultiLaneHighway,
            _ => ScenarioKind::UnsignalizedTIntersection,
        }
    }

    /// The most conservative action, used when planning finds nothing feasible.
    pub fn fallback(kind: ScenarioKind) -> ActionId {
        match kind {
            ScenarioKind::MultiLaneHighway => ActionId::DecelInLane,
            ScenarioKind::UnsignalizedTIntersection => ActionId::Stop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sets_are_contiguous_and_sized() {
        for (kind, n) in [
            (ScenarioKind::MultiLaneHighway, 5),
            (ScenarioKind::UnsignalizedTIntersection, 4),
        ] {
            let set = action_set(kind);
            assert_eq!(set.len(), n);
            for (i, a) in set.iter().enumerate() {
                assert_eq!(a.index(), i);
                assert_eq!(ActionId::from_index(kind, i), Some(*a));
                assert_eq!(a.scenario(), kind);
            }
            assert_eq!(ActionId::from_index(kind, n), None);
        }
    }
}
