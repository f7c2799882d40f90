//! Per-layer benchmark harness for the `winoconv` kernels.
//!
//! A sweep takes a list of convolution layers (a built-in network or a
//! layer CSV), runs each layer under the requested Winograd variants and the
//! im2row baseline, and collects one [`BenchRecord`] per variant and layer.
//! [`emit_report`] turns the records into CSV or Markdown.

pub mod error;
pub mod layers;
pub mod report;
pub mod runner;

pub use error::BenchError;
pub use layers::{load_layer_table, parse_layer_csv, scale_layer, Variant};
pub use report::{emit_report, parse_report, Format};
pub use runner::{enforce_tolerances, run_layer_bench, BenchOptions, BenchRecord, LayerRun, Skipped};

use winoconv::ConvLayerSpec;

/// Settings for a whole sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub bench: BenchOptions,
    /// Channel divisor applied to every layer; 0 and 1 leave layers unchanged.
    pub scale: usize,
    /// Variants to try; empty means every applicable one per layer.
    pub variants: Vec<Variant>,
}

/// Runs every layer and concatenates the results. Tolerances are not
/// enforced here, so a caller can still write the report before failing via
/// [`enforce_tolerances`].
pub fn run_sweep(layers: &[ConvLayerSpec], opts: &SweepOptions) -> Result<LayerRun, BenchError> {
    let mut all = LayerRun::default();
    for layer in layers {
        let layer = scale_layer(layer, opts.scale);
        let variants = if opts.variants.is_empty() {
            Variant::defaults_for(&layer)
        } else {
            opts.variants.clone()
        };
        let run = run_layer_bench(&layer, &variants, &opts.bench)?;
        all.records.extend(run.records);
        all.skipped.extend(run.skipped);
    }
    Ok(all)
}
