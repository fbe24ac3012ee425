//! Exact-rational toolkit for continuous first-order structures and their
//! discrete threshold presentations.
//!
//! A continuous signature gives [0,1]-valued relations and uniformly
//! continuous functions over a metric universe. Every continuous formula
//! `phi` and rational threshold `r` induce two classical relations,
//! `R_{phi>=r}` and `R_{phi<=r}`, and a finite structure can be encoded as a
//! discrete structure over those relations, checked against the axiom
//! schemes that make the threshold tables cohere like rational cuts, and
//! decoded back. All arithmetic is exact; nothing in this crate uses
//! floating point.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod densify;
pub mod discretize;
pub mod rational;
pub mod semantics;
pub mod syntax;
pub mod typespace;

pub use rational::Rat;
