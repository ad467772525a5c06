//! Acceptance gate for the zonekit workspace; see tests/acceptance.rs.
