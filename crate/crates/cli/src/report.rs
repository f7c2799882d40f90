//! CSV and Markdown rendering of benchmark records, with per-network totals.
//!
//! Record rows use the column order in [`REPORT_COLUMNS`]. Numbers are
//! written in Rust's shortest round-trip form, so parsing a report gives back
//! exactly the values that were emitted. Per-network totals follow the record
//! table: as `#` comment lines in CSV, as a second table in Markdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::BenchError;
use crate::layers::{network_of, Variant, REFERENCE_FAST_LAYER_GAIN, REFERENCE_LAYER_SPEEDUPS};
use crate::runner::BenchRecord;

pub const REPORT_COLUMNS: [&str; 9] = [
    "layer",
    "variant",
    "t_in_ns",
    "t_gemm_ns",
    "t_out_ns",
    "t_total_ns",
    "macs",
    "max_rel_err",
    "speedup",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(format!("unknown format {other:?} (expected csv or md)")),
        }
    }
}

/// Runtime totals for one network, over all benchmarked layers and over the
/// layers that have at least one fast variant.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSummary {
    pub network: String,
    pub layers: usize,
    pub baseline_ns: u64,
    /// Best variant per layer (im2row where nothing else ran).
    pub ours_ns: u64,
    pub fast_layers: usize,
    pub fast_baseline_ns: u64,
    pub fast_ours_ns: u64,
}

/// `(baseline − ours) / baseline · 100`.
pub fn percent_gain(baseline_ns: u64, ours_ns: u64) -> f64 {
    if baseline_ns == 0 {
        return 0.0;
    }
    (baseline_ns as f64 - ours_ns as f64) / baseline_ns as f64 * 100.0
}

impl NetworkSummary {
    pub fn gain_percent(&self) -> f64 {
        percent_gain(self.baseline_ns, self.ours_ns)
    }

    pub fn fast_gain_percent(&self) -> f64 {
        percent_gain(self.fast_baseline_ns, self.fast_ours_ns)
    }
}

struct LayerTimes {
    baseline: Option<u64>,
    best_fast: Option<u64>,
}

fn per_layer(records: &[BenchRecord]) -> Vec<(&str, LayerTimes)> {
    let mut order: Vec<&str> = Vec::new();
    let mut map: BTreeMap<&str, LayerTimes> = BTreeMap::new();
    for r in records {
        let entry = map.entry(&r.layer).or_insert_with(|| {
            order.push(&r.layer);
            LayerTimes {
                baseline: None,
                best_fast: None,
            }
        });
        if r.variant == Variant::Im2row.name() {
            entry.baseline = Some(r.t_total_ns);
        } else {
            entry.best_fast = Some(entry.best_fast.map_or(r.t_total_ns, |b| b.min(r.t_total_ns)));
        }
    }
    order.into_iter().map(|l| (l, map.remove(l).unwrap())).collect()
}

/// Totals per network, in order of first appearance. Layers without an
/// im2row record are ignored.
pub fn summarize(records: &[BenchRecord]) -> Vec<NetworkSummary> {
    let mut out: Vec<NetworkSummary> = Vec::new();
    for (layer, times) in per_layer(records) {
        let Some(baseline) = times.baseline else {
            continue;
        };
        let network = network_of(layer);
        let idx = match out.iter().position(|s| s.network == network) {
            Some(i) => i,
            None => {
                out.push(NetworkSummary {
                    network: network.to_string(),
                    layers: 0,
                    baseline_ns: 0,
                    ours_ns: 0,
                    fast_layers: 0,
                    fast_baseline_ns: 0,
                    fast_ours_ns: 0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.layers += 1;
        s.baseline_ns += baseline;
        match times.best_fast {
            Some(fast) => {
                let best = fast.min(baseline);
                s.ours_ns += best;
                s.fast_layers += 1;
                s.fast_baseline_ns += baseline;
                s.fast_ours_ns += best;
            }
            None => s.ours_ns += baseline,
        }
    }
    out
}

/// Average and peak per-layer speedup of the best fast variant for one
/// kernel shape in one network.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpeedup {
    pub network: String,
    pub kernel: (usize, usize),
    pub layers: usize,
    pub average: f64,
    pub peak: f64,
}

pub fn speedups_by_kernel(records: &[BenchRecord]) -> Vec<KernelSpeedup> {
    type LayerBest<'a> = BTreeMap<&'a str, f64>;
    let mut best: BTreeMap<(&str, (usize, usize)), LayerBest> = BTreeMap::new();
    for r in records {
        let Some((kernel, _)) = r.variant.parse::<Variant>().ok().and_then(Variant::winograd) else {
            continue;
        };
        let layers = best.entry((network_of(&r.layer), kernel)).or_default();
        let s = layers.entry(&r.layer).or_insert(r.speedup);
        *s = s.max(r.speedup);
    }
    best.into_iter()
        .map(|((network, kernel), layers)| KernelSpeedup {
            network: network.to_string(),
            kernel,
            layers: layers.len(),
            average: layers.values().sum::<f64>() / layers.len() as f64,
            peak: layers.values().cloned().fold(f64::MIN, f64::max),
        })
        .collect()
}

fn fields(r: &BenchRecord) -> [String; 9] {
    [
        r.layer.clone(),
        r.variant.clone(),
        r.t_in_ns.to_string(),
        r.t_gemm_ns.to_string(),
        r.t_out_ns.to_string(),
        r.t_total_ns.to_string(),
        r.macs.to_string(),
        format!("{:e}", r.max_rel_err),
        r.speedup.to_string(),
    ]
}

/// Renders `records` in `format`.
pub fn emit_report(records: &[BenchRecord], format: Format) -> Result<String, BenchError> {
    if records.is_empty() {
        return Err(BenchError::input("no benchmark records to report"));
    }
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&REPORT_COLUMNS.join(","));
            out.push('\n');
            for r in records {
                out.push_str(&fields(r).join(","));
                out.push('\n');
            }
            out.push_str("# summary,network,scope,layers,im2row_ns,ours_ns,saved_ns,gain_pct\n");
            for s in summarize(records) {
                for (scope, layers, base, ours) in [
                    ("all", s.layers, s.baseline_ns, s.ours_ns),
                    ("fast", s.fast_layers, s.fast_baseline_ns, s.fast_ours_ns),
                ] {
                    writeln!(
                        out,
                        "# summary,{},{scope},{layers},{base},{ours},{},{:.2}",
                        s.network,
                        base as i128 - ours as i128,
                        percent_gain(base, ours)
                    )
                    .unwrap();
                }
            }
        }
        Format::Markdown => {
            writeln!(out, "| {} |", REPORT_COLUMNS.join(" | ")).unwrap();
            writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len())).unwrap();
            for r in records {
                writeln!(out, "| {} |", fields(r).join(" | ")).unwrap();
            }

            out.push_str("\n### Totals per network\n\n");
            out.push_str("| network | scope | layers | im2row (ms) | ours (ms) | Speedup (ms) | Speedup (%) | reference (%) |\n");
            out.push_str("|---|---|---|---|---|---|---|---|\n");
            for s in summarize(records) {
                let reference = REFERENCE_FAST_LAYER_GAIN
                    .iter()
                    .find(|(n, _)| *n == s.network)
                    .map_or("-".to_string(), |(_, g)| format!("{g:.2}%"));
                for (scope, layers, base, ours, refr) in [
                    ("all conv", s.layers, s.baseline_ns, s.ours_ns, "-".to_string()),
                    (
                        "fast",
                        s.fast_layers,
                        s.fast_baseline_ns,
                        s.fast_ours_ns,
                        reference,
                    ),
                ] {
                    writeln!(
                        out,
                        "| {} | {scope} | {layers} | {:.3} | {:.3} | {:.3} | {:.2}% | {refr} |",
                        s.network,
                        base as f64 / 1e6,
                        ours as f64 / 1e6,
                        (base as f64 - ours as f64) / 1e6,
                        percent_gain(base, ours)
                    )
                    .unwrap();
                }
            }

            let by_kernel = speedups_by_kernel(records);
            if !by_kernel.is_empty() {
                out.push_str("\n### Per-layer speedup by kernel\n\n");
                out.push_str("| network | kernel | layers | average | peak | reference average (Cortex-A73) | reference peak (Cortex-A73) |\n");
                out.push_str("|---|---|---|---|---|---|---|\n");
                for KernelSpeedup {
                    network: net,
                    kernel,
                    layers: n,
                    average: avg,
                    peak,
                } in by_kernel
                {
                    let reference = REFERENCE_LAYER_SPEEDUPS
                        .iter()
                        .find(|(rn, rk, _, _)| *rn == net && *rk == kernel);
                    let (ra, rp) = reference.map_or(("-".into(), "-".into()), |(_, _, a, p)| {
                        (format!("{a:.1}x"), format!("{p:.1}x"))
                    });
                    writeln!(
                        out,
                        "| {net} | {}x{} | {n} | {avg:.2}x | {peak:.2}x | {ra} | {rp} |",
                        kernel.0, kernel.1
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(out)
}

fn record_from_fields(fields: &[&str], line: usize) -> Result<BenchRecord, BenchError> {
    if fields.len() != REPORT_COLUMNS.len() {
        return Err(BenchError::input_at(
            line,
            format!(
                "expected {} columns, found {}",
                REPORT_COLUMNS.len(),
                fields.len()
            ),
        ));
    }
    fn num<T: FromStr>(s: &str, col: &str, line: usize) -> Result<T, BenchError> {
        s.trim()
            .parse()
            .map_err(|_| BenchError::input_at(line, format!("bad {col} value {s:?}")))
    }
    Ok(BenchRecord {
        layer: fields[0].trim().to_string(),
        variant: fields[1].trim().to_string(),
        t_in_ns: num(fields[2], "t_in_ns", line)?,
        t_gemm_ns: num(fields[3], "t_gemm_ns", line)?,
        t_out_ns: num(fields[4], "t_out_ns", line)?,
        t_total_ns: num(fields[5], "t_total_ns", line)?,
        macs: num(fields[6], "macs", line)?,
        max_rel_err: num(fields[7], "max_rel_err", line)?,
        speedup: num(fields[8], "speedup", line)?,
    })
}

/// Reads the record rows back out of a report produced by [`emit_report`].
pub fn parse_report(text: &str, format: Format) -> Result<Vec<BenchRecord>, BenchError> {
    match format {
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .comment(Some(b'#'))
                .from_reader(text.as_bytes());
            let header = reader
                .headers()
                .map_err(|e| BenchError::input_at(1, e.to_string()))?;
            if header.iter().ne(REPORT_COLUMNS) {
                return Err(BenchError::input_at(1, "unexpected report header"));
            }
            reader
                .records()
                .map(|row| {
                    let row = row.map_err(|e| BenchError::input(e.to_string()))?;
                    let line = row.position().map_or(0, |p| p.line() as usize);
                    let f: Vec<&str> = row.iter().collect();
                    record_from_fields(&f, line)
                })
                .collect()
        }
        Format::Markdown => {
            let mut lines = text.lines().enumerate();
            let header = lines.next().map(|(_, l)| l).unwrap_or_default();
            let expected = format!("| {} |", REPORT_COLUMNS.join(" | "));
            if header != expected {
                return Err(BenchError::input_at(1, "unexpected report header"));
            }
            lines.next();
            let mut out = Vec::new();
            for (idx, line) in lines {
                if !line.starts_with('|') {
                    break;
                }
                let inner = line.trim().trim_start_matches('|').trim_end_matches('|');
                let f: Vec<&str> = inner.split('|').map(str::trim).collect();
                out.push(record_from_fields(&f, idx + 1)?);
            }
            Ok(out)
        }
    }
}
