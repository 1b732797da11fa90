use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use backflow_core::arrival::{arrival_series, BohmDistribution, TimeSeries};
use backflow_core::capdesign::{optimize, DesignError};
use backflow_core::capscatter::{dwell_time, CapEvolution, LayeredPotential, Window};
use backflow_core::wavepacket::Packet;

use crate::config::RunConfig;
use crate::{Failure, Status};

// samples scanned for flux zeros over the history window
const BOHM_GRID: usize = 12_001;

pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

pub fn read_potential(path: &Path) -> Result<LayeredPotential, Failure> {
    LayeredPotential::read(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

pub fn packet(c: &RunConfig) -> Result<Packet, Failure> {
    Packet::new(c.packet, c.units).map_err(Failure::numeric)
}

/// Report goes to stdout and to `output.report` when configured. A missed
/// target still writes the best design.
pub fn design(c: &RunConfig, out: Option<PathBuf>) -> Result<Status, Failure> {
    let out = out
        .or_else(|| c.output.potential.clone())
        .unwrap_or_else(|| PathBuf::from("potential.txt"));
    let (result, status) = match optimize(&c.design, c.seed) {
        Ok(r) => (r, Status::Ok),
        Err(DesignError::TargetMissed(r)) => (*r, Status::TargetMissed),
        Err(DesignError::InvalidSpec(m)) => return Err(Failure::config(m)),
        Err(e) => return Err(Failure::numeric(e)),
    };
    write_file(&out, &result.potential.to_interchange())?;
    let report = result.report();
    if let Some(p) = &c.output.report {
        write_file(p, &report)?;
    }
    print!("{report}");
    if status == Status::TargetMissed {
        eprintln!(
            "target missed: max check-grid survival {:e} > {:e}",
            result.max_check_survival, result.target
        );
    }
    Ok(status)
}

pub fn series(c: &RunConfig, pot: &LayeredPotential) -> Result<(TimeSeries, f64), Failure> {
    let packet = packet(c)?;
    let tau = dwell_time(pot, &packet, c.history).map_err(Failure::numeric)?.value;
    let t = c.time;
    let window = Window::new((0.0, pot.width()), (t.start, t.end + tau));
    let evo = CapEvolution::converged(pot, &packet, &window, c.quadrature.tol).map_err(Failure::numeric)?;
    let bohm = BohmDistribution::new(&packet, c.history, BOHM_GRID).map_err(Failure::numeric)?;
    let s = arrival_series(&evo, &bohm, t.values(), tau, c.quadrature.kijowski_tol)
        .map_err(Failure::numeric)?;
    Ok((s, tau))
}

/// `#` metadata lines, a column row, then one row per time. Fields carry
/// 17 significant digits so they read back to the same `f64`.
pub fn to_csv(c: &RunConfig, pot: &LayeredPotential, s: &TimeSeries, tau: f64) -> String {
    let mut out = String::new();
    let u = c.units;
    writeln!(out, "# arrival-time series at x = 0").unwrap();
    writeln!(out, "# units: a.u. (hbar = {}, mass = {})", u.hbar, u.mass).unwrap();
    let p = c.packet;
    writeln!(
        out,
        "# packet: alpha = {}, delta = {}, p0 = {}, x0 = {}, b = {}",
        p.alpha, p.delta, p.p0, p.x0, p.b
    )
    .unwrap();
    writeln!(out, "# absorber: L = {:e}, N = {}", pot.width(), pot.len()).unwrap();
    writeln!(out, "# tau_D = {tau:.16e}").unwrap();
    writeln!(out, "# dNdt_neg_shifted is -dN/dt evaluated at t + tau_D").unwrap();
    let names: Vec<&str> = s.names().collect();
    writeln!(out, "t,{}", names.join(",")).unwrap();
    let cols: Vec<&[f64]> = names.iter().map(|n| s.channel(n).unwrap()).collect();
    for (k, t) in s.t().iter().enumerate() {
        write!(out, "{t:.16e}").unwrap();
        for col in &cols {
            write!(out, ",{:.16e}", col[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn simulate(c: &RunConfig, potential: Option<PathBuf>, out: Option<PathBuf>) -> Result<Status, Failure> {
    let path = potential
        .or_else(|| c.output.potential.clone())
        .ok_or_else(|| Failure::config("no potential file: pass --potential or set output.potential"))?;
    let pot = read_potential(&path)?;
    let (s, tau) = series(c, &pot)?;
    let csv = to_csv(c, &pot, &s, tau);
    match out.or_else(|| c.output.csv.clone()) {
        Some(p) => write_file(&p, &csv)?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Failure::config(format!("stdout: {e}")))?,
    }
    Ok(Status::Ok)
}
