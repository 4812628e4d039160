//! Controller variants compared in the ablation.

use std::fmt;
use std::str::FromStr;

use crate::ocp::BarrierMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    StateConstraint,
    StateConstraintPassivity,
    FirstOrderCbf,
    FirstOrderCbfPassivity,
    HighOrderCbf,
    /// High-order barrier rows plus the passivity constraint.
    SepNmpc,
}

impl Arm {
    pub const ALL: [Arm; 6] = [
        Arm::StateConstraint,
        Arm::StateConstraintPassivity,
        Arm::FirstOrderCbf,
        Arm::FirstOrderCbfPassivity,
        Arm::HighOrderCbf,
        Arm::SepNmpc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::StateConstraint => "state_constraint",
            Arm::StateConstraintPassivity => "state_constraint+passivity",
            Arm::FirstOrderCbf => "first_order_cbf",
            Arm::FirstOrderCbfPassivity => "first_order_cbf+passivity",
            Arm::HighOrderCbf => "high_order_cbf",
            Arm::SepNmpc => "sep_nmpc",
        }
    }

    pub fn barrier(self) -> BarrierMode {
        match self {
            Arm::StateConstraint | Arm::StateConstraintPassivity => BarrierMode::StateConstraint,
            Arm::FirstOrderCbf | Arm::FirstOrderCbfPassivity => BarrierMode::FirstOrder,
            Arm::HighOrderCbf | Arm::SepNmpc => BarrierMode::HighOrder,
        }
    }

    pub fn passivity(self) -> bool {
        matches!(
            self,
            Arm::StateConstraintPassivity | Arm::FirstOrderCbfPassivity | Arm::SepNmpc
        )
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let arm = match key.as_str() {
            "high_order_cbf+passivity" | "sep" | "sepnmpc" => Some(Arm::SepNmpc),
            "hocbf" => Some(Arm::HighOrderCbf),
            _ => Arm::ALL.into_iter().find(|a| a.name() == key),
        };
        arm.ok_or_else(|| {
            let names: Vec<&str> = Arm::ALL.iter().map(|a| a.name()).collect();
            format!("unknown arm '{s}' (expected one of {})", names.join(", "))
        })
    }
}
