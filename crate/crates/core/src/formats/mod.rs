//! Text and image formats: AMAP attention dumps, SCEN scenarios, REGION
//! selections, run metrics and verdicts, and PGM heatmaps.

pub mod amap;
pub mod pgm;
pub mod region;
pub mod report;
pub mod scen;

pub use amap::{parse_amap, render_amap, render_mask, render_state, Amap};
pub use pgm::{decode_pgm, encode_pgm, heatmap, GrayImage};
pub use region::{parse_regions, render_regions, RegionBlock, Solver};
pub use report::{metrics_rows, parse_metrics, parse_verdicts, render_metrics, render_verdicts, MetricsRow};
pub use scen::{parse_scen, render_scen};
