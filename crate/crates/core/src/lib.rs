//! Attribute-based access control for city-scale sensing.
//!
//! Road segments and days are encoded as attributes of a KP-ABE scheme;
//! street segments are indexed by segment trees so that a contiguous stretch
//! of road needs only logarithmically many key components. Revocation is
//! handled by attribute re-versioning with proxy re-encryption performed by
//! an untrusted storage service.

pub mod codec;
pub mod segtree;
pub mod kpabe;
pub mod pre;
pub mod attrspace;
pub mod citysim;
pub mod protocol;
