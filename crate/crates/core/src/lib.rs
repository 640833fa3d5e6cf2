//! Trading-network markets with bilateral contracts.
//!
//! Everything is exact: prices and values are [`rational::Rational`], and
//! valuations may take the value −∞ on infeasible bundles.

pub mod coop;
pub mod demand;
pub mod dynamics;
pub mod equilibrium;
pub mod game;
pub mod generator;
pub mod lp;
pub mod market;
pub mod rational;
pub mod reduction;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod welfare;

pub use market::{Bundle, Market, MarketBuilder, PriceVector};
pub use rational::{ExtValue, Rational};
