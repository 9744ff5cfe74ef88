pub mod card;
pub mod catalog;
pub mod ec7;
pub mod engine;
pub mod expression;
pub mod skills;
pub mod units;
