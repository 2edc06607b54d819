//! Exhaustive overlapping-chunk test generation and reassembly policy analysis
//! for IPv4 fragments, IPv6 fragments and TCP segments.
pub mod analysis;
pub mod checksum;
pub mod cli;
pub mod corpus;
pub mod interval;
pub mod policy;
pub mod simulator;
pub mod wire;
