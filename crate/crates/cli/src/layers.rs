//! Convolution layer tables: built-in networks and the layer CSV format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use winoconv::{ConvLayerSpec, Padding};

use crate::error::BenchError;

/// Header of the layer CSV format.
pub const LAYER_CSV_HEADER: &str = "name,in_h,in_w,in_c,out_m,k_h,k_w,pad_t,pad_b,pad_l,pad_r,stride";

/// Networks with built-in layer tables.
pub const NETWORKS: [&str; 5] = ["vgg16", "vgg19", "googlenet", "inception-v3", "squeezenet"];

/// A convolution algorithm the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    F2x2_3x3,
    F4x4_3x3,
    F2x2_5x5,
    F4x4_5x5,
    F2_1x7,
    F2_7x1,
    Im2row,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::F2x2_3x3,
        Variant::F4x4_3x3,
        Variant::F2x2_5x5,
        Variant::F4x4_5x5,
        Variant::F2_1x7,
        Variant::F2_7x1,
        Variant::Im2row,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::F2x2_3x3 => "f2x2_3x3",
            Variant::F4x4_3x3 => "f4x4_3x3",
            Variant::F2x2_5x5 => "f2x2_5x5",
            Variant::F4x4_5x5 => "f4x4_5x5",
            Variant::F2_1x7 => "f2_1x7",
            Variant::F2_7x1 => "f2_7x1",
            Variant::Im2row => "im2row",
        }
    }

    /// Kernel `(k_h, k_w)` and output tile `(m_h, m_w)`; `None` for im2row.
    pub fn winograd(self) -> Option<((usize, usize), (usize, usize))> {
        match self {
            Variant::F2x2_3x3 => Some(((3, 3), (2, 2))),
            Variant::F4x4_3x3 => Some(((3, 3), (4, 4))),
            Variant::F2x2_5x5 => Some(((5, 5), (2, 2))),
            Variant::F4x4_5x5 => Some(((5, 5), (4, 4))),
            Variant::F2_1x7 => Some(((1, 7), (1, 2))),
            Variant::F2_7x1 => Some(((7, 1), (2, 1))),
            Variant::Im2row => None,
        }
    }

    /// Why this variant cannot run `spec`, if it cannot.
    pub fn inapplicable_reason(self, spec: &ConvLayerSpec) -> Option<String> {
        let (kernel, _) = self.winograd()?;
        if kernel != (spec.k_h, spec.k_w) {
            return Some(format!(
                "{} needs a {}x{} kernel",
                self.name(),
                kernel.0,
                kernel.1
            ));
        }
        if spec.stride != 1 {
            return Some(format!("{} needs stride 1", self.name()));
        }
        None
    }

    /// Variants tried by default for a layer: every applicable Winograd
    /// variant, plus the baseline.
    pub fn defaults_for(spec: &ConvLayerSpec) -> Vec<Variant> {
        Variant::ALL
            .into_iter()
            .filter(|v| *v != Variant::Im2row && v.inapplicable_reason(spec).is_none())
            .chain([Variant::Im2row])
            .collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Whether a layer benefits from one of the fast variants: stride 1 and a
/// `3×3`, `5×5`, `1×7` or `7×1` kernel.
pub fn is_fast_layer(spec: &ConvLayerSpec) -> bool {
    spec.stride == 1 && matches!((spec.k_h, spec.k_w), (3, 3) | (5, 5) | (1, 7) | (7, 1))
}

/// Divides channel counts by `scale` (rounding up, at least 1).
pub fn scale_layer(spec: &ConvLayerSpec, scale: usize) -> ConvLayerSpec {
    let scale = scale.max(1);
    ConvLayerSpec {
        in_c: spec.in_c.div_ceil(scale).max(1),
        out_m: spec.out_m.div_ceil(scale).max(1),
        ..spec.clone()
    }
}

/// Network a layer belongs to: the part of its name before `/`.
pub fn network_of(layer: &str) -> &str {
    layer.split_once('/').map_or("layers", |(net, _)| net)
}

/// Loads a built-in network (see [`NETWORKS`]) or, failing that, a layer
/// CSV file at `source`.
pub fn load_layer_table(source: &str) -> Result<Vec<ConvLayerSpec>, BenchError> {
    if let Some(layers) = builtin(source) {
        return Ok(layers);
    }
    let path = Path::new(source);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return parse_layer_csv(&text);
    }
    Err(BenchError::input(format!(
        "unknown network {source:?} (expected one of {}, or a layer CSV path)",
        NETWORKS.join(", ")
    )))
}

/// Parses the layer CSV format. Errors name the 1-based line number.
pub fn parse_layer_csv(text: &str) -> Result<Vec<ConvLayerSpec>, BenchError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| BenchError::input_at(1, e.to_string()))?
        .clone();
    let header_line = headers.iter().collect::<Vec<_>>().join(",");
    if header_line != LAYER_CSV_HEADER {
        return Err(BenchError::input_at(
            1,
            format!("expected header `{LAYER_CSV_HEADER}`, found `{header_line}`"),
        ));
    }

    let mut layers = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            BenchError::input_at(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let num = |idx: usize| -> Result<usize, BenchError> {
            let field = &record[idx];
            field.parse().map_err(|_| {
                BenchError::input_at(
                    line,
                    format!("column {} is not a nonnegative integer: {field:?}", &headers[idx]),
                )
            })
        };
        let spec = ConvLayerSpec {
            name: record[0].to_string(),
            in_h: num(1)?,
            in_w: num(2)?,
            in_c: num(3)?,
            out_m: num(4)?,
            k_h: num(5)?,
            k_w: num(6)?,
            pad: Padding {
                top: num(7)?,
                bottom: num(8)?,
                left: num(9)?,
                right: num(10)?,
            },
            stride: num(11)?,
        };
        if spec.in_c == 0 || spec.out_m == 0 {
            return Err(BenchError::input_at(line, "channel counts must be positive"));
        }
        spec.output_shape()
            .map_err(|e| BenchError::input_at(line, e.to_string()))?;
        layers.push(spec);
    }
    if layers.is_empty() {
        return Err(BenchError::input("layer table has no rows"));
    }
    Ok(layers)
}

/// Renders layers in the layer CSV format.
pub fn to_layer_csv(layers: &[ConvLayerSpec]) -> String {
    let mut out = String::from(LAYER_CSV_HEADER);
    out.push('\n');
    for l in layers {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            l.name,
            l.in_h,
            l.in_w,
            l.in_c,
            l.out_m,
            l.k_h,
            l.k_w,
            l.pad.top,
            l.pad.bottom,
            l.pad.left,
            l.pad.right,
            l.stride
        ));
    }
    out
}

/// Built-in layer table for `name`.
pub fn builtin(name: &str) -> Option<Vec<ConvLayerSpec>> {
    let mut table = Table::new(name);
    match name {
        "vgg16" => vgg(&mut table, [2, 2, 3, 3, 3]),
        "vgg19" => vgg(&mut table, [2, 2, 4, 4, 4]),
        "googlenet" => googlenet(&mut table),
        "inception-v3" => inception_v3(&mut table),
        "squeezenet" => squeezenet(&mut table),
        _ => return None,
    }
    Some(table.layers)
}

struct Table {
    network: &'static str,
    layers: Vec<ConvLayerSpec>,
}

impl Table {
    fn new(name: &str) -> Self {
        let network = NETWORKS.into_iter().find(|n| *n == name).unwrap_or("custom");
        Self {
            network,
            layers: Vec::new(),
        }
    }

    /// Adds a layer on a square `size × size` input. Odd kernels get "same"
    /// padding unless `valid`.
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: &str,
        size: usize,
        c: usize,
        m: usize,
        k: (usize, usize),
        stride: usize,
        valid: bool,
    ) {
        let pad = if valid {
            Padding::default()
        } else {
            Padding {
                top: k.0 / 2,
                bottom: k.0 / 2,
                left: k.1 / 2,
                right: k.1 / 2,
            }
        };
        self.layers.push(
            ConvLayerSpec::new(format!("{}/{name}", self.network), (size, size, c), m, k)
                .with_pad(pad)
                .with_stride(stride),
        );
    }

    fn same(&mut self, name: &str, size: usize, c: usize, m: usize, k: (usize, usize)) {
        self.conv(name, size, c, m, k, 1, false);
    }
}

fn vgg(t: &mut Table, convs_per_block: [usize; 5]) {
    let widths = [64, 128, 256, 512, 512];
    let mut size = 224;
    let mut c = 3;
    for (block, (&count, &m)) in convs_per_block.iter().zip(&widths).enumerate() {
        for i in 0..count {
            t.same(&format!("conv{}_{}", block + 1, i + 1), size, c, m, (3, 3));
            c = m;
        }
        size /= 2;
    }
}

fn googlenet(t: &mut Table) {
    t.conv("conv1_7x7_s2", 224, 3, 64, (7, 7), 2, false);
    t.same("conv2_3x3_reduce", 56, 64, 64, (1, 1));
    t.same("conv2_3x3", 56, 64, 192, (3, 3));
    // (name, size, in, #1x1, #3x3 reduce, #3x3, #5x5 reduce, #5x5, pool proj)
    let modules: [(&str, usize, usize, [usize; 6]); 9] = [
        ("3a", 28, 192, [64, 96, 128, 16, 32, 32]),
        ("3b", 28, 256, [128, 128, 192, 32, 96, 64]),
        ("4a", 14, 480, [192, 96, 208, 16, 48, 64]),
        ("4b", 14, 512, [160, 112, 224, 24, 64, 64]),
        ("4c", 14, 512, [128, 128, 256, 24, 64, 64]),
        ("4d", 14, 512, [112, 144, 288, 32, 64, 64]),
        ("4e", 14, 528, [256, 160, 320, 32, 128, 128]),
        ("5a", 7, 832, [256, 160, 320, 32, 128, 128]),
        ("5b", 7, 832, [384, 192, 384, 48, 128, 128]),
    ];
    for (name, size, c, [b1, r3, b3, r5, b5, pool]) in modules {
        let p = format!("inception_{name}");
        t.same(&format!("{p}/1x1"), size, c, b1, (1, 1));
        t.same(&format!("{p}/3x3_reduce"), size, c, r3, (1, 1));
        t.same(&format!("{p}/3x3"), size, r3, b3, (3, 3));
        t.same(&format!("{p}/5x5_reduce"), size, c, r5, (1, 1));
        t.same(&format!("{p}/5x5"), size, r5, b5, (5, 5));
        t.same(&format!("{p}/pool_proj"), size, c, pool, (1, 1));
    }
}

fn inception_v3(t: &mut Table) {
    t.conv("conv2d_1a_3x3", 299, 3, 32, (3, 3), 2, true);
    t.conv("conv2d_2a_3x3", 149, 32, 32, (3, 3), 1, true);
    t.same("conv2d_2b_3x3", 147, 32, 64, (3, 3));
    t.same("conv2d_3b_1x1", 73, 64, 80, (1, 1));
    t.conv("conv2d_4a_3x3", 73, 80, 192, (3, 3), 1, true);

    // 35x35 blocks
    for (name, c, pool) in [
        ("mixed_5b", 192, 32),
        ("mixed_5c", 256, 64),
        ("mixed_5d", 288, 64),
    ] {
        t.same(&format!("{name}/branch1x1"), 35, c, 64, (1, 1));
        t.same(&format!("{name}/branch5x5_1"), 35, c, 48, (1, 1));
        t.same(&format!("{name}/branch5x5_2"), 35, 48, 64, (5, 5));
        t.same(&format!("{name}/branch3x3dbl_1"), 35, c, 64, (1, 1));
        t.same(&format!("{name}/branch3x3dbl_2"), 35, 64, 96, (3, 3));
        t.same(&format!("{name}/branch3x3dbl_3"), 35, 96, 96, (3, 3));
        t.same(&format!("{name}/branch_pool"), 35, c, pool, (1, 1));
    }

    t.conv("mixed_6a/branch3x3", 35, 288, 384, (3, 3), 2, true);
    t.same("mixed_6a/branch3x3dbl_1", 35, 288, 64, (1, 1));
    t.same("mixed_6a/branch3x3dbl_2", 35, 64, 96, (3, 3));
    t.conv("mixed_6a/branch3x3dbl_3", 35, 96, 96, (3, 3), 2, true);

    // 17x17 blocks with factorized 7x7 convolutions
    for (name, c7) in [
        ("mixed_6b", 128),
        ("mixed_6c", 160),
        ("mixed_6d", 160),
        ("mixed_6e", 192),
    ] {
        t.same(&format!("{name}/branch1x1"), 17, 768, 192, (1, 1));
        t.same(&format!("{name}/branch7x7_1"), 17, 768, c7, (1, 1));
        t.same(&format!("{name}/branch7x7_2"), 17, c7, c7, (1, 7));
        t.same(&format!("{name}/branch7x7_3"), 17, c7, 192, (7, 1));
        t.same(&format!("{name}/branch7x7dbl_1"), 17, 768, c7, (1, 1));
        t.same(&format!("{name}/branch7x7dbl_2"), 17, c7, c7, (7, 1));
        t.same(&format!("{name}/branch7x7dbl_3"), 17, c7, c7, (1, 7));
        t.same(&format!("{name}/branch7x7dbl_4"), 17, c7, c7, (7, 1));
        t.same(&format!("{name}/branch7x7dbl_5"), 17, c7, 192, (1, 7));
        t.same(&format!("{name}/branch_pool"), 17, 768, 192, (1, 1));
    }

    t.same("mixed_7a/branch3x3_1", 17, 768, 192, (1, 1));
    t.conv("mixed_7a/branch3x3_2", 17, 192, 320, (3, 3), 2, true);
    t.same("mixed_7a/branch7x7x3_1", 17, 768, 192, (1, 1));
    t.same("mixed_7a/branch7x7x3_2", 17, 192, 192, (1, 7));
    t.same("mixed_7a/branch7x7x3_3", 17, 192, 192, (7, 1));
    t.conv("mixed_7a/branch7x7x3_4", 17, 192, 192, (3, 3), 2, true);

    // 8x8 blocks
    for (name, c) in [("mixed_7b", 1280), ("mixed_7c", 2048)] {
        t.same(&format!("{name}/branch1x1"), 8, c, 320, (1, 1));
        t.same(&format!("{name}/branch3x3_1"), 8, c, 384, (1, 1));
        t.same(&format!("{name}/branch3x3_2a"), 8, 384, 384, (1, 3));
        t.same(&format!("{name}/branch3x3_2b"), 8, 384, 384, (3, 1));
        t.same(&format!("{name}/branch3x3dbl_1"), 8, c, 448, (1, 1));
        t.same(&format!("{name}/branch3x3dbl_2"), 8, 448, 384, (3, 3));
        t.same(&format!("{name}/branch3x3dbl_3a"), 8, 384, 384, (1, 3));
        t.same(&format!("{name}/branch3x3dbl_3b"), 8, 384, 384, (3, 1));
        t.same(&format!("{name}/branch_pool"), 8, c, 192, (1, 1));
    }
}

fn squeezenet(t: &mut Table) {
    t.conv("conv1", 224, 3, 64, (3, 3), 2, true);
    // (name, size, in, squeeze, expand)
    let fires = [
        ("fire2", 55, 64, 16, 64),
        ("fire3", 55, 128, 16, 64),
        ("fire4", 27, 128, 32, 128),
        ("fire5", 27, 256, 32, 128),
        ("fire6", 13, 256, 48, 192),
        ("fire7", 13, 384, 48, 192),
        ("fire8", 13, 384, 64, 256),
        ("fire9", 13, 512, 64, 256),
    ];
    for (name, size, c, s, e) in fires {
        t.same(&format!("{name}/squeeze1x1"), size, c, s, (1, 1));
        t.same(&format!("{name}/expand1x1"), size, s, e, (1, 1));
        t.same(&format!("{name}/expand3x3"), size, s, e, (3, 3));
    }
    t.same("conv10", 13, 512, 1000, (1, 1));
}

/// Per-layer speedups reported for the original Cortex-A73 implementation,
/// `(network, kernel, average, peak)`. Printed next to measured numbers for
/// orientation only.
pub const REFERENCE_LAYER_SPEEDUPS: [(&str, (usize, usize), f64, f64); 9] = [
    ("vgg16", (3, 3), 2.7, 3.5),
    ("vgg19", (3, 3), 2.8, 3.5),
    ("googlenet", (3, 3), 2.6, 4.1),
    ("googlenet", (5, 5), 2.3, 3.2),
    ("inception-v3", (1, 7), 2.0, 2.1),
    ("inception-v3", (7, 1), 2.0, 2.1),
    ("inception-v3", (3, 3), 3.1, 3.8),
    ("inception-v3", (5, 5), 2.7, 2.8),
    ("squeezenet", (3, 3), 2.2, 2.6),
];

/// Fast-layer runtime reduction (percent) reported for the original
/// Cortex-A73 implementation.
pub const REFERENCE_FAST_LAYER_GAIN: [(&str, f64); 4] = [
    ("vgg16", 63.33),
    ("googlenet", 58.02),
    ("inception-v3", 56.08),
    ("squeezenet", 53.28),
];
