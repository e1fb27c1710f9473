//! Protocol engine and simulated-network harness for device-centric,
//! privacy-preserving federated authentication.
//!
//! The crate models the full actor cast of a federated deployment — user
//! devices, identity providers, service providers, behavioral authentication
//! authorities, a mobile network operator, and the central identity
//! consolidator — plus an adversary model, a deterministic scenario runner,
//! and a load harness. Everything is driven by seeded randomness and a
//! simulated clock so that a scenario run twice with the same seed produces a
//! byte-identical event log.
//!
//! Module map:
//! - [`identity`]: shared identity vocabulary (principals, attributes,
//!   assurance levels, consent, normalization and fusion).
//! - [`crypto`]: seeded primitives (Schnorr-family signatures, blind RSA,
//!   sealed storage, memory-hard password hashing, salted commitments).
//! - [`device`]: the simulated user device and its biometric-gated
//!   authenticator.
//! - [`federation`]: the OIDC-style authorization-code flow with FIDO
//!   enhancement, restricted tokens, one-time pseudonyms, and the QR bridge.
//! - [`pabac`]: blind-issued single-show selective-disclosure credentials.
//! - [`baa`]: behavioral profiles and verdicts.
//! - [`idc`]: entity registry, account locking, Mobile-Connect proxying,
//!   identity acquisition, and the failure-recovery state machine.
//! - [`risk`]: de-anonymization risk indicators over a population table.
//! - [`sim`]: the message bus, event log, world wiring, adversaries, scenario
//!   runner, trace verifier, and the load benchmark.

pub mod baa;
pub mod crypto;
pub mod device;
pub mod federation;
pub mod idc;
pub mod identity;
pub mod pabac;
pub mod par;
pub mod risk;
pub mod rng;
pub mod sim;
pub mod time;
pub mod util;

pub use identity::{Aal, AuthFactor, FactorKind, Principal, PrincipalRole};
pub use time::SimTime;
