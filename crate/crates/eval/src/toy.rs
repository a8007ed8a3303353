//! Small hand-built regulatory networks with known case-study outcomes.
//!
//! * Bypass network: the shortest route from `000` to `011` passes through
//!   `001`; a longer route through `100`, `110` and `111` avoids it.
//! * Bottleneck network: from `0000` the fastest exit to `1110` is a gamble
//!   that falls back to the start a third of the time; flipping `d` leaves the
//!   start for good but costs an extra step.

use reachavoid_core::envs::{BooleanNetwork, CardioConfig, CardioEnv};

pub const BYPASS_RULES: &str = "g0 := g0\ng1 := g1 AND (g2 OR g0)\ng2 := g2\n";
pub const BYPASS_START: &str = "000";
pub const BYPASS_GOAL: &str = "011";
pub const BYPASS_SHORTCUT: &str = "001";

pub const BOTTLENECK_RULES: &str = "a := b OR c OR d\nb := a\nc := a\nd := d\n";
pub const BOTTLENECK_START: &str = "0000";
pub const BOTTLENECK_GOAL: &str = "1110";

pub const TOY_K: usize = 10;

pub fn toy_env(rules: &str, start: &str, goal: &str) -> reachavoid_core::Result<CardioEnv> {
    let cfg = CardioConfig {
        k: TOY_K,
        max_episode_steps: 30,
        goal: goal.into(),
        start: Some(start.into()),
        ..CardioConfig::default()
    };
    CardioEnv::with_network(cfg, BooleanNetwork::parse(rules)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_attractors() {
        for (rules, start, goal) in [(BYPASS_RULES, BYPASS_START, BYPASS_GOAL), (BOTTLENECK_RULES, BOTTLENECK_START, BOTTLENECK_GOAL)] {
            let env = toy_env(rules, start, goal).unwrap();
            let net = env.network();
            assert!(net.is_attractor(net.parse_bitstring(start).unwrap()));
            assert!(net.is_attractor(net.parse_bitstring(goal).unwrap()));
        }
    }
}
