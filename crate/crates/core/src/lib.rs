pub mod basis;
pub mod coding;
pub mod exact;
pub mod measures;
pub mod names;
pub mod par;
pub mod randtests;
pub mod search;
pub mod semicomp;
pub mod spaces;
