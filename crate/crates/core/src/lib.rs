//! Group-decodable space-time block codes: exact construction, verification,
//! encoding/decoding and Monte-Carlo evaluation.

pub mod matrix;
pub mod code;
pub mod construction;
pub mod transceiver;
pub mod sim;
