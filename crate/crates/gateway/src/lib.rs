//! HTTP gateway: login and sessions, photo upload into a content-addressed
//! store, purchases, downloads gated by on-chain grants, coin minting and
//! topic subscriptions.

pub mod api;
pub mod blob;
pub mod http;
pub mod service;

pub use blob::BlobStore;
pub use http::{router, serve};
pub use service::{ApiError, Download, Gateway, GatewayConfig, SetupError, Upload};
