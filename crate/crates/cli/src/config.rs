//! Flat `section.key = value` run configuration.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use backflow_core::capdesign::DesignSpec;
use backflow_core::capscatter::HISTORY_WINDOW;
use backflow_core::wavepacket::{PacketParams, PacketWarning, Units};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Uniform reporting grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        backflow_core::arrival::time_grid(self.start, self.end, self.points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Amplitude tolerance for the momentum rule of the absorber evolution.
    pub tol: f64,
    pub kijowski_tol: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub potential: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub packet: PacketParams,
    pub units: Units,
    pub design: DesignSpec,
    pub time: TimeGrid,
    /// Window for whole-history integrals (dwell time, total absorption).
    pub history: (f64, f64),
    pub quadrature: QuadratureSettings,
    pub output: Outputs,
    pub seed: u64,
    pub warnings: Vec<PacketWarning>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            packet: PacketParams::reference(),
            units: Units::ATOMIC,
            design: DesignSpec::default(),
            time: TimeGrid {
                start: 0.0,
                end: 1.6e-3,
                points: 4000,
            },
            history: HISTORY_WINDOW,
            quadrature: QuadratureSettings {
                tol: 1e-10,
                kijowski_tol: 1e-8,
            },
            output: Outputs::default(),
            seed: 1,
            warnings: Vec::new(),
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "packet.alpha",
    "packet.delta",
    "packet.p0",
    "packet.x0",
    "packet.b",
    "units.hbar",
    "units.mass",
    "design.width",
    "design.layers",
    "design.p1",
    "design.p2",
    "design.samples",
    "design.restarts",
    "design.tolerance",
    "design.max_iterations",
    "design.target",
    "design.check_factor",
    "design.reweight_rounds",
    "design.reweight_exponent",
    "time.start",
    "time.end",
    "time.points",
    "history.start",
    "history.end",
    "quadrature.tol",
    "quadrature.kijowski_tol",
    "output.potential",
    "output.report",
    "output.csv",
];

fn number<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::global(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Blank lines and `#` comments are ignored; every key may appear once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::at(n, format!("expected key = value, got {line:?}")));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::at(n, format!("unknown key {k:?}")));
            }
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::at(n, format!("duplicate key {k:?}")));
            }
            if v.is_empty() {
                return Err(ConfigError::at(n, format!("{k}: missing value")));
            }
            let f = || number::<f64>(n, k, v);
            let u = || number::<usize>(n, k, v);
            match k {
                "seed" => c.seed = number(n, k, v)?,
                "packet.alpha" => c.packet.alpha = f()?,
                "packet.delta" => c.packet.delta = f()?,
                "packet.p0" => c.packet.p0 = f()?,
                "packet.x0" => c.packet.x0 = f()?,
                "packet.b" => c.packet.b = f()?,
                "units.hbar" => c.units.hbar = f()?,
                "units.mass" => c.units.mass = f()?,
                "design.width" => c.design.width = f()?,
                "design.layers" => c.design.layers = u()?,
                "design.p1" => c.design.band.0 = f()?,
                "design.p2" => c.design.band.1 = f()?,
                "design.samples" => c.design.samples = u()?,
                "design.restarts" => c.design.max_restarts = u()?,
                "design.tolerance" => c.design.tolerance = f()?,
                "design.max_iterations" => c.design.max_iterations = u()?,
                "design.target" => c.design.target = f()?,
                "design.check_factor" => c.design.check_factor = u()?,
                "design.reweight_rounds" => c.design.reweight_rounds = u()?,
                "design.reweight_exponent" => c.design.reweight_exponent = f()?,
                "time.start" => c.time.start = f()?,
                "time.end" => c.time.end = f()?,
                "time.points" => c.time.points = u()?,
                "history.start" => c.history.0 = f()?,
                "history.end" => c.history.1 = f()?,
                "quadrature.tol" => c.quadrature.tol = f()?,
                "quadrature.kijowski_tol" => c.quadrature.kijowski_tol = f()?,
                "output.potential" => c.output.potential = Some(v.into()),
                "output.report" => c.output.report = Some(v.into()),
                "output.csv" => c.output.csv = Some(v.into()),
                _ => unreachable!("key table and match disagree on {k}"),
            }
        }
        c.check()?;
        Ok(c)
    }

    fn check(&mut self) -> Result<(), ConfigError> {
        let g = |m: String| ConfigError::global(m);
        let Units { hbar, mass } = self.units;
        if !(hbar.is_finite() && hbar > 0.0 && mass.is_finite() && mass > 0.0) {
            return Err(g("units.hbar and units.mass must be positive".into()));
        }
        self.design.units = self.units;
        self.warnings = self.packet.validate().map_err(|e| g(e.to_string()))?;
        self.design.validate().map_err(|e| g(e.to_string()))?;
        let t = self.time;
        if !(t.start.is_finite() && t.end.is_finite()) {
            return Err(g("time.start and time.end must be finite".into()));
        }
        if t.points < 2 || t.end <= t.start {
            return Err(g(format!(
                "empty t-grid: {} points on [{}, {}]",
                t.points, t.start, t.end
            )));
        }
        let (a, b) = self.history;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(g("history.start must lie below history.end".into()));
        }
        if a > t.start || b < t.end {
            return Err(g("history window must contain the t-grid".into()));
        }
        let q = self.quadrature;
        if !(q.tol > 0.0 && q.kijowski_tol > 0.0) {
            return Err(g("quadrature tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c.packet, PacketParams::reference());
        assert_eq!(c.design, DesignSpec::default());
        assert_eq!(c.time.points, 4000);
    }

    #[test]
    fn shipped_configs_parse() {
        let c = RunConfig::parse(include_str!("../../../configs/reference.conf")).unwrap();
        let d = RunConfig::default();
        assert_eq!((c.packet, c.design, c.time, c.history, c.seed), (d.packet, d.design, d.time, d.history, d.seed));
        assert_eq!(c.output.csv, Some(PathBuf::from("series.csv")));
        let one = RunConfig::parse(include_str!("../../../configs/single_layer.conf")).unwrap();
        assert_eq!(one.design.layers, 1);
    }

    #[test]
    fn values_and_comments() {
        let c = RunConfig::parse(
            "packet.b = 3000 # fast\nseed=7\ndesign.layers = 2\ntime.points=11\noutput.csv = out.csv\n",
        )
        .unwrap();
        assert_eq!(c.packet.b, 3000.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.design.layers, 2);
        assert_eq!(c.time.values().len(), 11);
        assert_eq!(c.output.csv, Some(PathBuf::from("out.csv")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("seed = 1\n\npacket.alhpa = 1\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().contains("packet.alhpa"));
        assert_eq!(RunConfig::parse("seed = x\n").unwrap_err().line, Some(1));
        assert_eq!(RunConfig::parse("seed 1\n").unwrap_err().line, Some(1));
        assert_eq!(RunConfig::parse("seed=1\nseed=2\n").unwrap_err().line, Some(2));
    }

    #[test]
    fn invariants_checked_at_load() {
        for text in [
            "time.points = 0",
            "time.end = 0",
            "packet.delta = -1",
            "packet.x0 = 0.5",
            "design.layers = 0",
            "design.p2 = 100",
            "units.mass = 0",
            "quadrature.tol = 0",
            "history.end = 1e-3",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }
}
