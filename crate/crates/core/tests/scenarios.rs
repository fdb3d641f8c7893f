//! Scenario files and whole-network runs.

use floodcast_core::simnet::{simulate, Scenario};
use floodcast_core::synthetic::{corrupting_link, demo_scenario, single_zone_rise, trace_crossing, FLOOD_LINE};

#[test]
fn scenarios_round_trip_through_toml() {
    for s in [demo_scenario(), single_zone_rise(4), corrupting_link(9)] {
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = format!("{}\nbogus = 1\n", single_zone_rise(1).to_toml());
    assert!(Scenario::from_toml(&text).is_err());
}

#[test]
fn alarm_precedes_crossing_for_many_seeds() {
    for seed in 0..10 {
        let s = single_zone_rise(seed);
        let crossing = trace_crossing(&s.zones[0], FLOOD_LINE).unwrap();
        let trace = simulate(&s).unwrap();
        assert_eq!(trace.alarms.len(), 1, "seed {seed}");
        assert!(trace.alarms[0].t_min < crossing, "seed {seed}");
    }
}

#[test]
fn energy_is_positive_for_every_node() {
    let s = demo_scenario();
    let trace = simulate(&s).unwrap();
    assert_eq!(trace.energy.len(), s.nodes.len());
    assert!(trace.energy.values().all(|l| l.total_mj > 0.0));
}
