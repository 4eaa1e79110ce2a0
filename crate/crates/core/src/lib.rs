//! Multi-exposure HDR reconstruction with a feature-rich network.
//!
//! Three differently exposed LDR images go in, one HDR radiance map comes
//! out. The crate is self-contained: a small reverse-mode tensor engine
//! ([`tensor`]), image and Radiance codecs ([`imageio`]), the network
//! ([`model`]), training and evaluation ([`train`]), and the command-line
//! front end ([`cli`]).

pub mod cli;
pub mod imageio;
pub mod model;
pub mod tensor;
pub mod train;
