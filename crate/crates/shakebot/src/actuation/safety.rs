//! Two-level safety state machine.
//!
//! Level one: limit switches at the ends of the stroke disable the motor
//! (SoftEStop), cleared by an operator reset. Level two: the emergency push
//! button cuts motor power (HardEStop), cleared only by a power cycle.
//! HardEStop dominates: no event other than PowerCycle leaves it.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SafetyStatus {
    Idle,
    Running,
    SoftEStop,
    HardEStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SafetyEvent {
    LimitSwitch,
    EStopPressed,
    Reset,
    PowerCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyState {
    status: SafetyStatus,
}

impl Default for SafetyState {
    fn default() -> Self {
        Self::new()
    }
}

impl SafetyState {
    pub fn new() -> Self {
        SafetyState {
            status: SafetyStatus::Idle,
        }
    }

    pub fn status(&self) -> SafetyStatus {
        self.status
    }

    /// Total, deterministic transition function.
    pub fn transition(status: SafetyStatus, event: SafetyEvent) -> SafetyStatus {
        use SafetyEvent::*;
        use SafetyStatus::*;
        match (status, event) {
            // hard estop dominates; only a power cycle leaves it
            (HardEStop, PowerCycle) => Idle,
            (HardEStop, _) => HardEStop,
            (_, EStopPressed) => HardEStop,
            (_, LimitSwitch) => SoftEStop,
            (SoftEStop, Reset) => Idle,
            (s, Reset) => s,
            (s, PowerCycle) => s,
        }
    }

    pub fn apply(&mut self, event: SafetyEvent) -> SafetyStatus {
        self.status = Self::transition(self.status, event);
        self.status
    }

    /// Idle → Running at the start of a pulse-train execution.
    pub(crate) fn begin_run(&mut self) {
        if self.status == SafetyStatus::Idle {
            self.status = SafetyStatus::Running;
        }
    }

    /// Running → Idle when an execution completes without incident.
    pub(crate) fn finish_run(&mut self) {
        if self.status == SafetyStatus::Running {
            self.status = SafetyStatus::Idle;
        }
    }

    /// Driver fault during execution: treated as the hard level.
    pub(crate) fn hard_fault(&mut self) {
        self.status = SafetyStatus::HardEStop;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SafetyEvent::*;
    use SafetyStatus::*;

    #[test]
    fn limit_switch_disables_motor() {
        assert_eq!(SafetyState::transition(Running, LimitSwitch), SoftEStop);
        assert_eq!(SafetyState::transition(Idle, LimitSwitch), SoftEStop);
    }

    #[test]
    fn hard_dominates_soft() {
        assert_eq!(SafetyState::transition(SoftEStop, EStopPressed), HardEStop);
        // a limit switch firing while hard-stopped cannot downgrade the stop
        assert_eq!(SafetyState::transition(HardEStop, LimitSwitch), HardEStop);
    }

    #[test]
    fn only_power_cycle_clears_hard_estop() {
        assert_eq!(SafetyState::transition(HardEStop, Reset), HardEStop);
        assert_eq!(SafetyState::transition(HardEStop, PowerCycle), Idle);
    }

    #[test]
    fn reset_clears_soft_estop_only() {
        assert_eq!(SafetyState::transition(SoftEStop, Reset), Idle);
        assert_eq!(SafetyState::transition(Running, Reset), Running);
        assert_eq!(SafetyState::transition(Idle, Reset), Idle);
    }

    #[test]
    fn full_table() {
        let states = [Idle, Running, SoftEStop, HardEStop];
        let events = [LimitSwitch, EStopPressed, Reset, PowerCycle];
        let expected = [
            // Idle
            [SoftEStop, HardEStop, Idle, Idle],
            // Running
            [SoftEStop, HardEStop, Running, Running],
            // SoftEStop
            [SoftEStop, HardEStop, Idle, SoftEStop],
            // HardEStop
            [HardEStop, HardEStop, HardEStop, Idle],
        ];
        for (i, s) in states.iter().enumerate() {
            for (j, e) in events.iter().enumerate() {
                assert_eq!(
                    SafetyState::transition(*s, *e),
                    expected[i][j],
                    "({s:?}, {e:?})"
                );
            }
        }
    }
}
