//! Artificial-noise MIMOME wiretap transmission with quantized CSI feedback.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod error;
pub mod experiments;
pub mod matrix_rand;
pub mod montecarlo;
pub mod oracle;
pub mod quantizer;
pub mod secrecy_mc;
pub mod selftest;
pub mod system_model;

pub use error::{Error, Result};
