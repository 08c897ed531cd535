//! Location-based recommendations computed over switchable homomorphic
//! encryption.
//!
//! Two non-colluding servers cooperate: server Y stores the encrypted
//! co-occurrence matrix and runs the recommendation loop, server X acts as
//! the proxy of the interactive multiplicative-to-additive switch. The client
//! owns every key and only ever sees its own decrypted, location-filtered
//! list.

pub mod bench;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod hilbert;
pub mod protocol;
pub mod recommender;
pub mod she;
pub mod switch;

pub use error::{Error, Result};
