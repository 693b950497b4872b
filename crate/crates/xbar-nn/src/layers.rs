//! Layer descriptions, the line-oriented network text format, and shape
//! inference.
//!
//! One layer per line, `kind key=value ...`, `#` comments:
//!
//! ```text
//! input channels=1 height=28 width=28
//! conv out_channels=20 kernel=5 stride=1 pad=0
//! relu
//! maxpool kernel=2 stride=2
//! flatten
//! fully_connected units=500
//! relu
//! fully_connected units=10
//! softmax_loss
//! ```

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    FullyConnected {
        units: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    SoftmaxLoss,
}

impl LayerSpec {
    /// Layers realized as crossbar matrix products.
    pub fn mappable(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::SoftmaxLoss => "softmax_loss",
        }
    }
}

/// (channels, height, width) of an activation tensor.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

fn parse_fields(rest: &str, line: usize) -> Result<std::collections::BTreeMap<String, usize>> {
    let mut map = std::collections::BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| {
            Error::Spec(format!("line {line}: expected key=value, got {tok:?}"))
        })?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::Spec(format!("line {line}: bad integer {v:?} for {k}")))?;
        map.insert(k.to_string(), v);
    }
    Ok(map)
}

fn need(
    map: &std::collections::BTreeMap<String, usize>,
    key: &str,
    line: usize,
) -> Result<usize> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::Spec(format!("line {line}: missing {key}=")))
}

impl NetworkSpec {
    pub fn parse(text: &str) -> Result<NetworkSpec> {
        let mut input = None;
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (kind, rest) = match line.split_once(char::is_whitespace) {
                Some((k, r)) => (k, r),
                None => (line, ""),
            };
            let fields = parse_fields(rest, lineno)?;
            match kind {
                "input" => {
                    if input.is_some() {
                        return Err(Error::Spec(format!("line {lineno}: duplicate input")));
                    }
                    input = Some((
                        need(&fields, "channels", lineno)?,
                        need(&fields, "height", lineno)?,
                        need(&fields, "width", lineno)?,
                    ));
                }
                "conv" => layers.push(LayerSpec::Conv {
                    out_channels: need(&fields, "out_channels", lineno)?,
                    kernel: need(&fields, "kernel", lineno)?,
                    stride: fields.get("stride").copied().unwrap_or(1),
                    pad: fields.get("pad").copied().unwrap_or(0),
                }),
                "fully_connected" => layers.push(LayerSpec::FullyConnected {
                    units: need(&fields, "units", lineno)?,
                }),
                "relu" => layers.push(LayerSpec::Relu),
                "maxpool" => layers.push(LayerSpec::MaxPool {
                    kernel: need(&fields, "kernel", lineno)?,
                    stride: fields.get("stride").copied().unwrap_or(need(
                        &fields, "kernel", lineno,
                    )?),
                }),
                "flatten" => layers.push(LayerSpec::Flatten),
                "softmax_loss" => layers.push(LayerSpec::SoftmaxLoss),
                other => {
                    return Err(Error::Spec(format!(
                        "line {lineno}: unknown layer kind {other:?}"
                    )))
                }
            }
        }
        let input =
            input.ok_or_else(|| Error::Spec("network needs an input line".into()))?;
        let spec = NetworkSpec { input, layers };
        spec.shapes()?; // validate
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "input channels={} height={} width={}\n",
            self.input.0, self.input.1, self.input.2
        );
        for l in &self.layers {
            match l {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => out.push_str(&format!(
                    "conv out_channels={out_channels} kernel={kernel} stride={stride} pad={pad}\n"
                )),
                LayerSpec::FullyConnected { units } => {
                    out.push_str(&format!("fully_connected units={units}\n"))
                }
                LayerSpec::Relu => out.push_str("relu\n"),
                LayerSpec::MaxPool { kernel, stride } => {
                    out.push_str(&format!("maxpool kernel={kernel} stride={stride}\n"))
                }
                LayerSpec::Flatten => out.push_str("flatten\n"),
                LayerSpec::SoftmaxLoss => out.push_str("softmax_loss\n"),
            }
        }
        out
    }

    /// Activation shape after each layer. Errors on inconsistent geometry.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for (idx, l) in self.layers.iter().enumerate() {
            cur = match *l {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    let (c, h, w) = cur;
                    if kernel == 0 || stride == 0 || c == 0 {
                        return Err(Error::Spec(format!("layer {idx}: degenerate conv")));
                    }
                    if h + 2 * pad < kernel || w + 2 * pad < kernel {
                        return Err(Error::Spec(format!(
                            "layer {idx}: kernel {kernel} larger than padded input {h}x{w}"
                        )));
                    }
                    let oh = (h + 2 * pad - kernel) / stride + 1;
                    let ow = (w + 2 * pad - kernel) / stride + 1;
                    (out_channels, oh, ow)
                }
                LayerSpec::FullyConnected { units } => {
                    let (c, h, w) = cur;
                    if c * h * w == 0 {
                        return Err(Error::Spec(format!("layer {idx}: empty input")));
                    }
                    (units, 1, 1)
                }
                LayerSpec::Relu => cur,
                LayerSpec::MaxPool { kernel, stride } => {
                    let (c, h, w) = cur;
                    if kernel == 0 || stride == 0 || h < kernel || w < kernel {
                        return Err(Error::Spec(format!(
                            "layer {idx}: pool {kernel} does not fit {h}x{w}"
                        )));
                    }
                    (c, (h - kernel) / stride + 1, (w - kernel) / stride + 1)
                }
                LayerSpec::Flatten => {
                    let (c, h, w) = cur;
                    (c * h * w, 1, 1)
                }
                LayerSpec::SoftmaxLoss => {
                    if idx + 1 != self.layers.len() {
                        return Err(Error::Spec(
                            "softmax_loss must be the final layer".into(),
                        ));
                    }
                    cur
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// `(fan_in, fan_out)` of each mappable layer, `None` for host layers.
    pub fn matrix_dims(&self) -> Result<Vec<Option<(usize, usize)>>> {
        let shapes = self.shapes()?;
        let mut dims = Vec::with_capacity(self.layers.len());
        for (idx, l) in self.layers.iter().enumerate() {
            let in_shape = if idx == 0 { self.input } else { shapes[idx - 1] };
            dims.push(match *l {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    ..
                } => Some((in_shape.0 * kernel * kernel, out_channels)),
                LayerSpec::FullyConnected { units } => {
                    Some((in_shape.0 * in_shape.1 * in_shape.2, units))
                }
                _ => None,
            });
        }
        Ok(dims)
    }

    /// Input shape of layer `idx`.
    pub fn input_shape(&self, idx: usize) -> Result<Shape> {
        if idx == 0 {
            Ok(self.input)
        } else {
            Ok(self.shapes()?[idx - 1])
        }
    }

    pub fn n_classes(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        let last = shapes
            .last()
            .ok_or_else(|| Error::Spec("empty network".into()))?;
        Ok(last.0 * last.1 * last.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LENET: &str = "\
input channels=1 height=28 width=28
conv out_channels=20 kernel=5 stride=1 pad=0
relu
maxpool kernel=2 stride=2
conv out_channels=50 kernel=5 stride=1 pad=0
relu
maxpool kernel=2 stride=2
flatten
fully_connected units=500
relu
fully_connected units=10
softmax_loss
";

    #[test]
    fn parse_and_round_trip() {
        let spec = NetworkSpec::parse(LENET).unwrap();
        assert_eq!(spec.input, (1, 28, 28));
        assert_eq!(spec.layers.len(), 11);
        let again = NetworkSpec::parse(&spec.to_text()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn shapes_follow_the_standard_arithmetic() {
        let spec = NetworkSpec::parse(LENET).unwrap();
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[0], (20, 24, 24));
        assert_eq!(shapes[2], (20, 12, 12));
        assert_eq!(shapes[3], (50, 8, 8));
        assert_eq!(shapes[5], (50, 4, 4));
        assert_eq!(shapes[6], (800, 1, 1));
        assert_eq!(shapes[7], (500, 1, 1));
        assert_eq!(spec.n_classes().unwrap(), 10);
        let dims = spec.matrix_dims().unwrap();
        assert_eq!(dims[0], Some((25, 20)));
        assert_eq!(dims[3], Some((500, 50)));
        assert_eq!(dims[7], Some((800, 500)));
    }

    #[test]
    fn rejects_misplaced_loss_and_bad_geometry() {
        assert!(NetworkSpec::parse("input channels=1 height=8 width=8\nsoftmax_loss\nrelu\n")
            .is_err());
        assert!(NetworkSpec::parse(
            "input channels=1 height=4 width=4\nconv out_channels=2 kernel=9\n"
        )
        .is_err());
        assert!(NetworkSpec::parse("conv out_channels=2 kernel=3\n").is_err());
    }
}
