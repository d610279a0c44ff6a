use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::unit::{UnitKind, MAX_RELU_TERMS};

/// Spatial layout of a layer: one unit per `(row, col)`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
}

impl Grid {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major cells within Chebyshev distance `radius` of `(row, col)`,
    /// truncated at the borders.
    pub fn window(&self, row: usize, col: usize, radius: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r0 = row.saturating_sub(radius);
        let r1 = (row + radius).min(self.height.saturating_sub(1));
        let c0 = col.saturating_sub(radius);
        let c1 = (col + radius).min(self.width.saturating_sub(1));
        (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| (r, c)))
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Image layout of the input vector: `(row, col, channel)`, channel fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputGrid {
    pub fn grid(&self) -> Grid {
        Grid::new(self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which earlier units feed a layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Connectivity {
    /// Every unit of each listed source. Source 0 is the input vector,
    /// source `k >= 1` is layer `k`.
    Dense { from: Vec<usize> },
    /// Units of the `depth` preceding layers within `radius` of the same
    /// grid cell, plus the input pixels within `radius` when `image` is set.
    Local { depth: usize, radius: usize, image: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub units: usize,
    pub kind: UnitKind,
    pub grid: Option<Grid>,
    pub connectivity: Connectivity,
}

impl LayerSpec {
    pub fn dense(kind: UnitKind, units: usize, from: Vec<usize>) -> Self {
        Self {
            units,
            kind,
            grid: None,
            connectivity: Connectivity::Dense { from },
        }
    }

    pub fn local(kind: UnitKind, grid: Grid, depth: usize, radius: usize, image: bool) -> Self {
        Self {
            units: grid.len(),
            kind,
            grid: Some(grid),
            connectivity: Connectivity::Local { depth, radius, image },
        }
    }
}

/// A layered network. The last layer is the output layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub input_count: usize,
    pub input_grid: Option<InputGrid>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_count: usize, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_count,
            input_grid: None,
            layers,
        }
    }

    pub fn with_input_grid(grid: InputGrid, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_count: grid.len(),
            input_grid: Some(grid),
            layers,
        }
    }

    /// Plain multilayer perceptron: input → hidden... → output, each layer
    /// densely connected to the previous one.
    pub fn chain(input_count: usize, layers: &[(UnitKind, usize)]) -> Self {
        let layers = layers
            .iter()
            .enumerate()
            .map(|(i, &(kind, units))| LayerSpec::dense(kind, units, vec![i]))
            .collect();
        Self::new(input_count, layers)
    }

    /// Per-pixel network over an image grid: every layer local with the
    /// same radius; the first `image_layers` layers also see the image.
    /// The last layer is a sigmoid output.
    pub fn local_stack(input: InputGrid, hidden: usize, depth: usize, radius: usize, image_layers: usize) -> Self {
        let grid = input.grid();
        let layers = (0..=hidden)
            .map(|l| LayerSpec::local(UnitKind::Sigmoid, grid, depth, radius, l < image_layers))
            .collect();
        Self::with_input_grid(input, layers)
    }

    pub fn output(&self) -> &LayerSpec {
        self.layers.last().expect("network has no layers")
    }

    /// Grid of source `s` (0 = input).
    fn source_grid(&self, source: usize) -> Option<Grid> {
        if source == 0 {
            self.input_grid.map(|g| g.grid())
        } else {
            self.layers.get(source - 1).and_then(|l| l.grid)
        }
    }

    /// Checks every structural rule and reports all violations at once.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut v = Vec::new();
        if self.input_count == 0 {
            v.push(Violation::NoInputs);
        }
        if let Some(g) = self.input_grid {
            if g.len() != self.input_count || g.is_empty() {
                v.push(Violation::InputGridMismatch {
                    grid: g,
                    input_count: self.input_count,
                });
            }
        }
        if self.layers.is_empty() {
            v.push(Violation::NoLayers);
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            let l = idx + 1;
            if layer.units == 0 {
                v.push(Violation::EmptyLayer { layer: l });
            }
            if let UnitKind::ReluSum(k) = layer.kind {
                if k == 0 || k > MAX_RELU_TERMS {
                    v.push(Violation::ReluTerms { layer: l, terms: k });
                }
            }
            if let Some(g) = layer.grid {
                if g.len() != layer.units {
                    v.push(Violation::GridSize {
                        layer: l,
                        grid: g,
                        units: layer.units,
                    });
                }
            }
            match &layer.connectivity {
                Connectivity::Dense { from } => {
                    if from.is_empty() {
                        v.push(Violation::NoSources { layer: l });
                    }
                    let mut seen = BTreeSet::new();
                    for &s in from {
                        if s >= l {
                            v.push(Violation::Acyclicity { layer: l, source: s });
                        }
                        if !seen.insert(s) {
                            v.push(Violation::DuplicateSource { layer: l, source: s });
                        }
                    }
                }
                Connectivity::Local { depth, radius, image } => {
                    let Some(grid) = layer.grid else {
                        v.push(Violation::MissingGrid { layer: l });
                        continue;
                    };
                    if *depth == 0 {
                        v.push(Violation::DepthOutOfRange { layer: l, depth: *depth });
                    }
                    let max_radius = grid.height.max(grid.width);
                    if *radius > max_radius {
                        v.push(Violation::RadiusOutOfRange {
                            layer: l,
                            radius: *radius,
                            max: max_radius,
                        });
                    }
                    if *image {
                        match self.input_grid {
                            None => v.push(Violation::ImageWithoutInputGrid { layer: l }),
                            Some(ig) if ig.grid() != grid => v.push(Violation::SourceGridMismatch { layer: l, source: 0 }),
                            _ => {}
                        }
                    }
                    let first = l.saturating_sub(*depth).max(1);
                    for s in first..l {
                        if self.source_grid(s) != Some(grid) {
                            v.push(Violation::SourceGridMismatch { layer: l, source: s });
                        }
                    }
                    if !*image && first >= l {
                        v.push(Violation::NoSources { layer: l });
                    }
                }
            }
        }
        if let Some(out) = self.layers.last() {
            if matches!(out.kind, UnitKind::ReluSum(_)) {
                v.push(Violation::OutputKind { kind: out.kind });
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations: v })
        }
    }
}

/// One broken structural rule. Layers are numbered from 1; source 0 is the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoInputs,
    NoLayers,
    EmptyLayer { layer: usize },
    Acyclicity { layer: usize, source: usize },
    DuplicateSource { layer: usize, source: usize },
    NoSources { layer: usize },
    MissingGrid { layer: usize },
    GridSize { layer: usize, grid: Grid, units: usize },
    InputGridMismatch { grid: InputGrid, input_count: usize },
    SourceGridMismatch { layer: usize, source: usize },
    ImageWithoutInputGrid { layer: usize },
    RadiusOutOfRange { layer: usize, radius: usize, max: usize },
    DepthOutOfRange { layer: usize, depth: usize },
    ReluTerms { layer: usize, terms: u32 },
    OutputKind { kind: UnitKind },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoInputs => write!(f, "input_count must be positive"),
            Violation::NoLayers => write!(f, "network has no layers"),
            Violation::EmptyLayer { layer } => write!(f, "layer {layer}: empty layer"),
            Violation::Acyclicity { layer, source } => {
                write!(f, "layer {layer}: acyclicity violated, source {source} is not an earlier layer")
            }
            Violation::DuplicateSource { layer, source } => write!(f, "layer {layer}: source {source} listed twice"),
            Violation::NoSources { layer } => write!(f, "layer {layer}: no input sources"),
            Violation::MissingGrid { layer } => write!(f, "layer {layer}: local connectivity needs a grid"),
            Violation::GridSize { layer, grid, units } => {
                write!(f, "layer {layer}: grid {grid} does not hold {units} units")
            }
            Violation::InputGridMismatch { grid, input_count } => write!(
                f,
                "input grid {}x{}x{} does not match input_count {input_count}",
                grid.height, grid.width, grid.channels
            ),
            Violation::SourceGridMismatch { layer, source } => {
                write!(f, "layer {layer}: local source {source} has a different grid")
            }
            Violation::ImageWithoutInputGrid { layer } => {
                write!(f, "layer {layer}: image access requires an input grid")
            }
            Violation::RadiusOutOfRange { layer, radius, max } => {
                write!(f, "layer {layer}: radius {radius} out of range (max {max})")
            }
            Violation::DepthOutOfRange { layer, depth } => write!(f, "layer {layer}: depth {depth} out of range"),
            Violation::ReluTerms { layer, terms } => {
                write!(f, "layer {layer}: relusum term count {terms} outside 1..={MAX_RELU_TERMS}")
            }
            Violation::OutputKind { kind } => write!(f, "output layer cannot use unit kind {kind}"),
        }
    }
}

/// Every violation found by [`NetworkSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid network spec: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

// Text form shared by config files and checkpoints:
//   sigmoid 4 dense 0
//   tanh 6 dense 0,1
//   sigmoid 256 grid 16x16 local depth=2 radius=1 image

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind, self.units)?;
        if let Some(g) = self.grid {
            write!(f, " grid {g}")?;
        }
        match &self.connectivity {
            Connectivity::Dense { from } => {
                let list: Vec<String> = from.iter().map(|s| s.to_string()).collect();
                write!(f, " dense {}", list.join(","))
            }
            Connectivity::Local { depth, radius, image } => {
                write!(f, " local depth={depth} radius={radius}")?;
                if *image {
                    write!(f, " image")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>, String> {
    s.split('x')
        .map(|p| p.parse::<usize>().map_err(|_| format!("bad dimensions `{s}`")))
        .collect()
}

impl FromStr for LayerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tokens = s.split_whitespace();
        let kind: UnitKind = tokens.next().ok_or("empty layer description")?.parse()?;
        let units_tok = tokens.next().ok_or("missing unit count")?;
        let units: usize = units_tok.parse().map_err(|_| format!("bad unit count `{units_tok}`"))?;
        let mut grid = None;
        let mut connectivity = None;
        while let Some(tok) = tokens.next() {
            match tok {
                "grid" => {
                    let dims = parse_dims(tokens.next().ok_or("missing grid dimensions")?)?;
                    if dims.len() != 2 {
                        return Err("grid must be HxW".into());
                    }
                    grid = Some(Grid::new(dims[0], dims[1]));
                }
                "dense" => {
                    let list = tokens.next().ok_or("missing dense source list")?;
                    let from = list
                        .split(',')
                        .map(|p| p.parse::<usize>().map_err(|_| format!("bad source `{p}`")))
                        .collect::<Result<Vec<_>, _>>()?;
                    connectivity = Some(Connectivity::Dense { from });
                }
                "local" => {
                    let mut depth = None;
                    let mut radius = None;
                    let mut image = false;
                    for opt in tokens.by_ref() {
                        if opt == "image" {
                            image = true;
                        } else if let Some(v) = opt.strip_prefix("depth=") {
                            depth = Some(v.parse().map_err(|_| format!("bad depth `{v}`"))?);
                        } else if let Some(v) = opt.strip_prefix("radius=") {
                            radius = Some(v.parse().map_err(|_| format!("bad radius `{v}`"))?);
                        } else {
                            return Err(format!("unknown local option `{opt}`"));
                        }
                    }
                    connectivity = Some(Connectivity::Local {
                        depth: depth.ok_or("local connectivity needs depth=")?,
                        radius: radius.ok_or("local connectivity needs radius=")?,
                        image,
                    });
                }
                other => return Err(format!("unexpected token `{other}`")),
            }
        }
        Ok(LayerSpec {
            units,
            kind,
            grid,
            connectivity: connectivity.ok_or("missing connectivity (dense|local)")?,
        })
    }
}

impl fmt::Display for InputGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl FromStr for InputGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dims = parse_dims(s)?;
        if dims.len() != 3 {
            return Err(format!("input grid must be HxWxC, got `{s}`"));
        }
        Ok(InputGrid {
            height: dims[0],
            width: dims[1],
            channels: dims[2],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> NetworkSpec {
        NetworkSpec::chain(3, &[(UnitKind::Sigmoid, 2), (UnitKind::Sigmoid, 1)])
    }

    #[test]
    fn minimal_spec_is_valid() {
        assert_eq!(minimal().validate(), Ok(()));
    }

    #[test]
    fn forward_reference_is_a_cycle() {
        let mut spec = minimal();
        spec.layers[0].connectivity = Connectivity::Dense { from: vec![2] };
        let report = spec.validate().unwrap_err();
        assert!(report
            .violations
            .contains(&Violation::Acyclicity { layer: 1, source: 2 }));
        assert!(report.to_string().contains("acyclicity"));
    }

    #[test]
    fn self_reference_is_a_cycle() {
        let mut spec = minimal();
        spec.layers[1].connectivity = Connectivity::Dense { from: vec![1, 2] };
        assert!(spec
            .validate()
            .unwrap_err()
            .violations
            .contains(&Violation::Acyclicity { layer: 2, source: 2 }));
    }

    #[test]
    fn degenerate_one_by_one_grid() {
        let input = InputGrid {
            height: 1,
            width: 1,
            channels: 3,
        };
        let spec = NetworkSpec::local_stack(input, 1, 1, 1, 1);
        assert_eq!(spec.validate(), Ok(()));
    }

    #[test]
    fn report_lists_every_violation() {
        let spec = NetworkSpec {
            input_count: 4,
            input_grid: None,
            layers: vec![
                LayerSpec::dense(UnitKind::Sigmoid, 0, vec![0]),
                LayerSpec {
                    units: 4,
                    kind: UnitKind::ReluSum(0),
                    grid: None,
                    connectivity: Connectivity::Local {
                        depth: 1,
                        radius: 1,
                        image: true,
                    },
                },
                LayerSpec::dense(UnitKind::ReluSum(3), 1, vec![3]),
            ],
        };
        let report = spec.validate().unwrap_err();
        assert_eq!(
            report.violations,
            vec![
                Violation::EmptyLayer { layer: 1 },
                Violation::ReluTerms { layer: 2, terms: 0 },
                Violation::MissingGrid { layer: 2 },
                Violation::Acyclicity { layer: 3, source: 3 },
                Violation::OutputKind {
                    kind: UnitKind::ReluSum(3)
                },
            ]
        );
    }

    #[test]
    fn radius_out_of_range() {
        let input = InputGrid {
            height: 2,
            width: 3,
            channels: 1,
        };
        let mut spec = NetworkSpec::local_stack(input, 0, 1, 3, 1);
        assert_eq!(spec.validate(), Ok(()));
        spec.layers[0].connectivity = Connectivity::Local {
            depth: 1,
            radius: 4,
            image: true,
        };
        assert!(spec.validate().unwrap_err().violations.contains(&Violation::RadiusOutOfRange {
            layer: 1,
            radius: 4,
            max: 3
        }));
    }

    #[test]
    fn local_first_layer_without_image_has_no_sources() {
        let input = InputGrid {
            height: 2,
            width: 2,
            channels: 1,
        };
        let spec = NetworkSpec::local_stack(input, 1, 1, 1, 0);
        assert!(spec
            .validate()
            .unwrap_err()
            .violations
            .contains(&Violation::NoSources { layer: 1 }));
    }

    #[test]
    fn validate_is_pure() {
        let mut spec = minimal();
        spec.layers[0].units = 0;
        assert_eq!(spec.validate(), spec.validate());
    }

    #[test]
    fn layer_text_roundtrip() {
        let layers = [
            LayerSpec::dense(UnitKind::Sigmoid, 4, vec![0]),
            LayerSpec::dense(UnitKind::ReluSum(5), 3, vec![0, 1]),
            LayerSpec::local(UnitKind::Tanh, Grid::new(16, 16), 2, 1, true),
            LayerSpec::local(UnitKind::Delta, Grid::new(3, 5), 1, 0, false),
        ];
        for layer in layers {
            let text = layer.to_string();
            assert_eq!(text.parse::<LayerSpec>().unwrap(), layer, "{text}");
        }
        assert!("sigmoid 4".parse::<LayerSpec>().is_err());
        assert!("sigmoid four dense 0".parse::<LayerSpec>().is_err());
    }

    #[test]
    fn window_truncates_at_borders() {
        let g = Grid::new(3, 4);
        let w: Vec<_> = g.window(0, 0, 1).collect();
        assert_eq!(w, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(g.window(1, 1, 1).count(), 9);
        assert_eq!(Grid::new(1, 1).window(0, 0, 1).count(), 1);
    }
}
