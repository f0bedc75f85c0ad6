//! Command layer for the launch decision engine: scenario-driven experiment
//! runs that persist CSV results, SVG heatmaps, and a reproducibility
//! manifest per output directory.

pub mod cache;
pub mod commands;
pub mod output;
pub mod plot;
