//! Benchmark selection and parameters. The launcher snapshots the whole
//! config through a system call at the start of every traced run, so a
//! replay rebuilds the identical topology from the data file alone — no
//! command-line coordination between the recording and replaying invocations.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "bench", rename_all = "kebab-case")]
pub enum BenchConfig {
    /// Two actors bounce a message back and forth.
    PingPong { rounds: u32 },
    /// One producer floods a counter, then asks for the total.
    Counting { messages: u32 },
    /// A token circulates through a ring of actors until its hop budget runs
    /// out.
    ThreadRing { actors: u32, hops: u32 },
    /// Spawn a batch of workers that each report one result to a collector.
    ForkJoin { actors: u32 },
    /// Dining philosophers with a fork arbitrator; denials retry, so message
    /// counts are schedule-dependent.
    Philosophers { seats: u32, rounds: u32 },
    /// Two contenders race to reach a judge first; arrival order is decided
    /// by the scheduler (and randomized delays) at recording time.
    PromiseRace,
    /// Timed external events from a script feed a listener through a data
    /// source; covers external messages, promise resolutions, opaque
    /// requests, and environment system calls.
    Workload { script: String },
}

/// Script used for `workload` runs when no file is supplied.
/// Lines are `delay_ms event_type payload`; event types are bound by the
/// listener (1 = job message, 2 = deadline resolution, 3 = opaque request).
pub const DEFAULT_SCRIPT: &str = "\
# delay_ms event_type payload
0 1 ingest north
2 3 status probe
2 1 ingest south
5 2 window closed
";

impl BenchConfig {
    /// Canonical command-line name; matches the serialized `bench` tag.
    pub fn name(&self) -> &'static str {
        match self {
            BenchConfig::PingPong { .. } => "ping-pong",
            BenchConfig::Counting { .. } => "counting",
            BenchConfig::ThreadRing { .. } => "thread-ring",
            BenchConfig::ForkJoin { .. } => "fork-join",
            BenchConfig::Philosophers { .. } => "philosophers",
            BenchConfig::PromiseRace => "promise-race",
            BenchConfig::Workload { .. } => "workload",
        }
    }

    /// Default-parameter config for a command-line benchmark name.
    pub fn from_name(name: &str) -> Option<BenchConfig> {
        Some(match name {
            "ping-pong" => BenchConfig::PingPong { rounds: 2_000 },
            "counting" => BenchConfig::Counting { messages: 200_000 },
            "thread-ring" => BenchConfig::ThreadRing {
                actors: 32,
                hops: 2_000,
            },
            "fork-join" => BenchConfig::ForkJoin { actors: 500 },
            "philosophers" => BenchConfig::Philosophers {
                seats: 8,
                rounds: 20,
            },
            "promise-race" => BenchConfig::PromiseRace,
            "workload" => BenchConfig::Workload {
                script: DEFAULT_SCRIPT.to_string(),
            },
            _ => return None,
        })
    }

    /// Every benchmark with default parameters, in reporting order.
    pub fn all() -> Vec<BenchConfig> {
        [
            "ping-pong",
            "counting",
            "thread-ring",
            "fork-join",
            "philosophers",
            "promise-race",
            "workload",
        ]
        .iter()
        .map(|n| BenchConfig::from_name(n).unwrap())
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_from_name() {
        for config in BenchConfig::all() {
            assert_eq!(
                BenchConfig::from_name(config.name()).unwrap().name(),
                config.name()
            );
        }
        assert!(BenchConfig::from_name("no-such-bench").is_none());
    }

    #[test]
    fn configs_survive_json() {
        for config in BenchConfig::all() {
            let text = serde_json::to_string(&config).unwrap();
            let back: BenchConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, config);
        }
    }

    #[test]
    fn the_tag_is_the_cli_name() {
        let text = serde_json::to_string(&BenchConfig::PingPong { rounds: 7 }).unwrap();
        assert_eq!(text, r#"{"bench":"ping-pong","rounds":7}"#);
    }
}
