//! Strong-coupling polaron transport of an impurity in a tilted optical
//! lattice immersed in a Bose–Einstein condensate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bogoliubov;
pub mod coupling;
pub mod experiments;
pub mod gme;
pub mod model;
pub mod quadrature;
pub mod selftrap;
pub mod special;
