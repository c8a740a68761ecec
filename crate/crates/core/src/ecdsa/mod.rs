pub mod bias;
pub mod curve;
pub mod hnp;
pub mod lattice;
pub mod lll;
pub mod pipeline;
pub mod recover;
pub mod sign;
pub mod subset;

pub use bias::{gen_biased_nonce, gen_uniform_nonce, BiasKind, BiasSpec};
pub use curve::{point_add, scalar_mult, CurveParams, Point};
pub use hnp::{build_hnp, key_from_known_nonce, HnpInstance};
pub use lattice::{build_lattice, LatticeBasis};
pub use lll::{bkz2, is_lll_reduced, lll, Delta};
pub use recover::{recover_key, verify_key};
pub use sign::{hash_message, sign, verify, KeyPair, Signature, SignatureRecord};
pub use subset::{expected_reductions, subset_search, SubsetOutcome};
