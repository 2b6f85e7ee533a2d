//! keymon: a consent-first input-event monitoring pipeline paired with
//! the anti-keylogger scanners that detect such tooling.
//!
//! The monitoring half captures or replays keyboard/mouse events,
//! encrypts batches with a Hill cipher, and ships them to a collection
//! server over TCP. The detection half scans directory trees against a
//! SHA-1 signature database and a heuristic token-scoring rule set.
//!
//! There is deliberately no covert capture here: events come from
//! replay files, a consented foreground capture, or a seeded synthetic
//! generator.

pub mod detector;
pub mod event;
pub mod heuristic;
pub mod hill;
pub mod transport;

pub(crate) mod walk;
