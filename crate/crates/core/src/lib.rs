#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod governance;
pub mod lab;
pub mod net;
pub mod num;
pub mod report;
pub mod scenario;
