//! Bundled case studies.

use std::fmt;
use std::str::FromStr;

use crate::network::{parse_network, Network};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    SinglePipe,
    EightNode,
}

impl Case {
    pub const ALL: [Case; 2] = [Case::SinglePipe, Case::EightNode];

    pub fn name(self) -> &'static str {
        match self {
            Case::SinglePipe => "single-pipe",
            Case::EightNode => "eight-node",
        }
    }

    pub fn network_json(self) -> &'static str {
        match self {
            Case::SinglePipe => include_str!("../data/single_pipe/network.json"),
            Case::EightNode => include_str!("../data/eight_node/network.json"),
        }
    }

    pub fn scenario_json(self) -> &'static str {
        match self {
            Case::SinglePipe => include_str!("../data/single_pipe/scenario.json"),
            Case::EightNode => include_str!("../data/eight_node/scenario.json"),
        }
    }

    pub fn network(self) -> Network {
        parse_network(self.network_json()).expect("bundled network parses")
    }

    pub fn scenario(self) -> Scenario {
        Scenario::parse(self.scenario_json()).expect("bundled scenario parses")
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single-pipe" | "single_pipe" => Ok(Case::SinglePipe),
            "eight-node" | "eight_node" | "8-node" => Ok(Case::EightNode),
            other => Err(format!("unknown case `{other}` (expected single-pipe or eight-node)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::validate_topology;

    #[test]
    fn bundled_cases_load_and_validate() {
        for case in Case::ALL {
            let net = case.network();
            assert!(validate_topology(&net).is_empty(), "{case}");
            case.scenario();
            assert_eq!(case.name().parse::<Case>().unwrap(), case);
        }
    }
}
