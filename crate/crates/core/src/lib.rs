pub mod criteria;
pub mod expr;
pub mod family;
pub mod field;
pub mod io;
pub mod lattice;
pub mod model;
pub mod poly;
pub mod rank;
pub mod reparam;
pub mod search;
