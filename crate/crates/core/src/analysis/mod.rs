mod heatmap;
mod probe;
mod sweep;

pub use heatmap::{
    annotations, export_head_heatmaps, export_heatmap, heatmap_csv, heatmap_pgm, parse_heatmap_csv,
    read_heatmap_csv, HeatmapArtifact,
};
pub use probe::{redundancy_index, zeroing_probe, ProbePoint, ProbeResult, Selection, ZeroingSpec, INDEX_FRACTIONS};
pub use sweep::{run_sweep, sweep_csv, PointStatus, SweepBase, SweepGrid, SweepRow, SWEEP_HEADER};
