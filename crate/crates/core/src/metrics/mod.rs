//! Level style metrics, edit distance, SSIM and expressive range.

pub mod edit;
pub mod range;
pub mod report;
pub mod roles;
pub mod ssim;
pub mod tiles;

pub use edit::{edit_distance, min_edit_distance, CellGrid};
pub use range::{expressive_range, histogram_intersection, AxisRange, RangeGrid};
pub use report::{aggregate_csv, LevelMetrics, MeanStd, MetricReport, METRIC_NAMES};
pub use roles::{strategy_map_costs, TileRoleMap};
pub use ssim::{image_luma, ssim, ssim_gray};
pub use tiles::{density, enemy_sparsity, gap_count, interestingness, leniency, linearity, movement_cost_leniency, platform_centres};
