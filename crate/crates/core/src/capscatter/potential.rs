use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::ScatterError;

/// `N` equal-width complex square barriers covering `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredPotential {
    width: f64,
    layers: Vec<Complex64>,
}

impl LayeredPotential {
    /// Layers must be absorbing or neutral (`Im V_j <= 0`); the design
    /// module enforces strict absorption through its parametrization.
    pub fn new(width: f64, layers: Vec<Complex64>) -> Result<Self, ScatterError> {
        if !(width.is_finite() && width > 0.0) {
            return Err(ScatterError::InvalidPotential(format!("width {width} must be positive")));
        }
        if layers.is_empty() {
            return Err(ScatterError::InvalidPotential("at least one layer required".into()));
        }
        for (j, v) in layers.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(ScatterError::InvalidPotential(format!("layer {j} is not finite")));
            }
            if v.im > 0.0 {
                return Err(ScatterError::InvalidPotential(format!(
                    "layer {j} has Im V = {} > 0 (emitting)",
                    v.im
                )));
            }
        }
        Ok(Self { width, layers })
    }

    pub fn free(width: f64, n: usize) -> Self {
        Self::new(width, vec![Complex64::new(0.0, 0.0); n]).expect("valid free potential")
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Complex64] {
        &self.layers
    }

    pub fn layer_width(&self) -> f64 {
        self.width / self.layers.len() as f64
    }

    /// Left edge of layer `j`.
    pub fn layer_start(&self, j: usize) -> f64 {
        self.width * j as f64 / self.layers.len() as f64
    }

    pub fn value_at(&self, x: f64) -> Complex64 {
        if x < 0.0 || x > self.width {
            return Complex64::new(0.0, 0.0);
        }
        let j = ((x / self.layer_width()) as usize).min(self.layers.len() - 1);
        self.layers[j]
    }

    pub fn is_strictly_absorbing(&self) -> bool {
        self.layers.iter().all(|v| v.im < 0.0)
    }

    /// Interchange text: `L <width>`, `N <count>`, then one `Re Im` line per
    /// layer, 17 significant digits.
    pub fn to_interchange(&self) -> String {
        let mut s = String::new();
        writeln!(s, "L {:.16e}", self.width).unwrap();
        writeln!(s, "N {}", self.layers.len()).unwrap();
        for v in &self.layers {
            writeln!(s, "{:.16e} {:.16e}", v.re, v.im).unwrap();
        }
        s
    }

    pub fn from_interchange(text: &str) -> Result<Self, ScatterError> {
        let mut width = None;
        let mut count = None;
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |tok: &str| -> Result<f64, ScatterError> {
                tok.parse::<f64>().map_err(|_| ScatterError::Parse {
                    line: lineno,
                    message: format!("not a number: {tok:?}"),
                })
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["L", v] if width.is_none() => width = Some(parse(v)?),
                ["N", v] if count.is_none() => {
                    count = Some(v.parse::<usize>().map_err(|_| ScatterError::Parse {
                        line: lineno,
                        message: format!("bad layer count {v:?}"),
                    })?)
                }
                [re, im] if width.is_some() && count.is_some() => {
                    layers.push(Complex64::new(parse(re)?, parse(im)?))
                }
                _ => {
                    return Err(ScatterError::Parse {
                        line: lineno,
                        message: format!("unexpected line {line:?}"),
                    })
                }
            }
        }
        let width = width.ok_or(ScatterError::Parse {
            line: 0,
            message: "missing L".into(),
        })?;
        let count = count.ok_or(ScatterError::Parse {
            line: 0,
            message: "missing N".into(),
        })?;
        if layers.len() != count {
            return Err(ScatterError::Parse {
                line: 0,
                message: format!("N = {count} but {} layer lines", layers.len()),
            });
        }
        Self::new(width, layers)
    }

    pub fn read(path: &Path) -> Result<Self, ScatterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScatterError::Io(format!("{}: {e}", path.display())))?;
        Self::from_interchange(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), ScatterError> {
        std::fs::write(path, self.to_interchange())
            .map_err(|e| ScatterError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interchange_round_trip_is_exact() {
        let pot = LayeredPotential::new(
            0.01,
            vec![
                Complex64::new(1.0 / 3.0, -std::f64::consts::PI * 1e4),
                Complex64::new(-12345.678901234567, -0.1),
            ],
        )
        .unwrap();
        let back = LayeredPotential::from_interchange(&pot.to_interchange()).unwrap();
        assert_eq!(pot, back);
    }

    #[test]
    fn rejects_emitting_layer_and_bad_files() {
        assert!(LayeredPotential::new(0.01, vec![Complex64::new(0.0, 1.0)]).is_err());
        assert!(LayeredPotential::new(0.0, vec![Complex64::new(0.0, -1.0)]).is_err());
        let e = LayeredPotential::from_interchange("L 0.01\nN 2\n1 -1\n").unwrap_err();
        assert!(matches!(e, ScatterError::Parse { .. }));
        let e = LayeredPotential::from_interchange("L 0.01\nN 1\n1 x\n").unwrap_err();
        assert!(matches!(e, ScatterError::Parse { line: 3, .. }));
    }

    #[test]
    fn value_lookup() {
        let pot = LayeredPotential::new(
            1.0,
            vec![Complex64::new(1.0, -1.0), Complex64::new(2.0, -2.0)],
        )
        .unwrap();
        assert_eq!(pot.value_at(-0.1), Complex64::new(0.0, 0.0));
        assert_eq!(pot.value_at(0.25), Complex64::new(1.0, -1.0));
        assert_eq!(pot.value_at(0.75), Complex64::new(2.0, -2.0));
        assert_eq!(pot.value_at(1.0), Complex64::new(2.0, -2.0));
    }
}
