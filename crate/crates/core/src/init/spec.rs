//! Declarative layer descriptions and their text format.
//!
//! One layer per line, whitespace separated:
//!
//! ```text
//! # name   kind    c_in c_out kernel stage residual_role
//! stem     conv1d  12   160   5      0     none
//! b0.conv3 conv1d  160  160   3      1     branch_last
//! expand   conv2d  14   512   1x1    2     none
//! proj     linear  320  14    -      3     none
//! head     head    14   12    -      3     none
//! ```
//!
//! `kernel` is `-` for linear and head layers, a single extent for conv1d and
//! `HxW` for conv2d. Blank lines and `#` comments are ignored.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv1d,
    Conv2d,
    Linear,
    Head,
}

impl LayerKind {
    fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Linear => "linear",
            LayerKind::Head => "head",
        }
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv1d" => Ok(LayerKind::Conv1d),
            "conv2d" => Ok(LayerKind::Conv2d),
            "linear" => Ok(LayerKind::Linear),
            "head" => Ok(LayerKind::Head),
            other => Err(Error::Spec(format!("unknown layer kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ResidualRole {
    #[default]
    None,
    /// Last layer of a residual branch; receives the fixup scale.
    BranchLast,
}

impl FromStr for ResidualRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "-" => Ok(ResidualRole::None),
            "branch_last" => Ok(ResidualRole::BranchLast),
            other => Err(Error::Spec(format!("unknown residual role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: Vec<usize>,
    pub stage: usize,
    pub residual_role: ResidualRole,
}

impl LayerSpec {
    pub fn conv1d(name: &str, c_in: usize, c_out: usize, k: usize, stage: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Conv1d,
            c_in,
            c_out,
            kernel: vec![k],
            stage,
            residual_role: ResidualRole::None,
        }
    }

    pub fn conv2d(name: &str, c_in: usize, c_out: usize, kh: usize, kw: usize, stage: usize) -> Self {
        Self {
            kernel: vec![kh, kw],
            kind: LayerKind::Conv2d,
            ..Self::conv1d(name, c_in, c_out, 1, stage)
        }
    }

    pub fn linear(name: &str, c_in: usize, c_out: usize, stage: usize) -> Self {
        Self {
            kernel: Vec::new(),
            kind: LayerKind::Linear,
            ..Self::conv1d(name, c_in, c_out, 1, stage)
        }
    }

    /// Classification head mapping `feature_dim` features to `num_classes` logits.
    pub fn head(name: &str, feature_dim: usize, num_classes: usize, stage: usize) -> Self {
        Self {
            kind: LayerKind::Head,
            ..Self::linear(name, feature_dim, num_classes, stage)
        }
    }

    pub fn branch_last(mut self) -> Self {
        self.residual_role = ResidualRole::BranchLast;
        self
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    /// Weight tensor shape: `(c_out, c_in, kernel...)`.
    pub fn weight_shape(&self) -> Vec<usize> {
        let mut s = vec![self.c_out, self.c_in];
        s.extend_from_slice(&self.kernel);
        s
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.chars().any(char::is_whitespace) {
            return Err(Error::Spec(format!("invalid layer name '{}'", self.name)));
        }
        if self.c_in == 0 || self.c_out == 0 || self.kernel.contains(&0) {
            return Err(Error::Spec(format!("layer '{}' has a zero extent", self.name)));
        }
        let expected = match self.kind {
            LayerKind::Conv1d => 1,
            LayerKind::Conv2d => 2,
            LayerKind::Linear | LayerKind::Head => 0,
        };
        if self.kernel.len() != expected {
            return Err(Error::Spec(format!(
                "layer '{}' of kind {} needs {expected} kernel extents, got {}",
                self.name,
                self.kind.as_str(),
                self.kernel.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kernel = if self.kernel.is_empty() {
            "-".to_string()
        } else {
            self.kernel
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("x")
        };
        let role = match self.residual_role {
            ResidualRole::None => "none",
            ResidualRole::BranchLast => "branch_last",
        };
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.name,
            self.kind.as_str(),
            self.c_in,
            self.c_out,
            kernel,
            self.stage,
            role
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            layer.validate()?;
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Spec(format!("duplicate layer name '{}'", layer.name)));
            }
        }
        Ok(())
    }

    /// Number of stages, `max(stage) + 1` over non-head layers.
    pub fn num_stages(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind != LayerKind::Head)
            .map(|l| l.stage + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", fields.len())));
            }
            let count = |s: &str, what: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(format!("invalid {what} '{s}'")))
            };
            let kernel = if fields[4] == "-" {
                Vec::new()
            } else {
                fields[4]
                    .split('x')
                    .map(|k| count(k, "kernel extent"))
                    .collect::<Result<Vec<_>>>()?
            };
            let layer = LayerSpec {
                name: fields[0].to_string(),
                kind: fields[1].parse().map_err(|e: Error| err(e.to_string()))?,
                c_in: count(fields[2], "c_in")?,
                c_out: count(fields[3], "c_out")?,
                kernel,
                stage: count(fields[5], "stage")?,
                residual_role: fields[6].parse().map_err(|e: Error| err(e.to_string()))?,
            };
            layer.validate().map_err(|e| err(e.to_string()))?;
            layers.push(layer);
        }
        Self::new(layers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# name kind c_in c_out kernel stage residual_role\n");
        for l in &self.layers {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }
}
