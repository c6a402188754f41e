//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use tod_core::datagen::{AgentKind, SftExample};
use tod_core::intent::render_intent_target;
use tod_core::Domain;

/// Bundled `data/` directory at the workspace root.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// `per_domain` gold intent examples in each of five domains.
pub fn intent_pool(per_domain: usize) -> Vec<SftExample> {
    let domains = [Domain::Attraction, Domain::Hotel, Domain::Restaurant, Domain::Taxi, Domain::Train];
    domains
        .iter()
        .flat_map(|d| {
            (0..per_domain).map(move |i| SftExample {
                agent: AgentKind::Intent,
                domain: *d,
                prompt: format!("Question: request {i} about {d}"),
                target: render_intent_target(&format!("find_{d}")),
                dialogue_id: format!("{d}-{i}"),
                turn_index: 0,
                context_values: vec![],
            })
        })
        .collect()
}
