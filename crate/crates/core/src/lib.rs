//! Capacity bounds and achievable rates for the two-relay vector Gaussian
//! parallel relay network: cut-set bounds, decode-, amplify- and
//! compress-and-forward. All rates are in bits per channel use and all powers
//! are linear.

pub mod af;
pub mod bc;
pub mod bounds;
pub mod cf;
pub mod channel;
pub mod df;
pub mod effort;
pub mod error;
pub mod mac;
pub mod numerics;
pub mod rates;
pub mod report;

pub use af::{AfGains, AfOutcome, AfState};
pub use bc::{BcParams, BcRegion, BcWitness, EncodingOrder, Membership};
pub use bounds::{bound_broadcast, bound_sidecut, upper_bound, SideCut, UpperBoundReport};
pub use cf::CfSolution;
pub use channel::{angled_instance, named_instance, ChannelGeometry, ChannelInstance, NamedMatrix};
pub use df::{ActiveBound, DfReport};
pub use effort::Effort;
pub use error::{ChannelError, NumericsError, RelayError, Result};
pub use mac::{CorrelationResult, MacCorner, MacParams};
pub use numerics::{CMatrix, EigDecomposition, Svd, WaterfillResult, C64};
pub use rates::RateTriple;
pub use report::{Config, RateReport, Scheme, SweepSpec, Table};
