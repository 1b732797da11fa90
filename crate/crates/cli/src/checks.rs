//! The invariant suite behind `backflow validate`.

use std::cell::OnceCell;
use std::fmt::Write as _;
use std::path::PathBuf;

use backflow_core::arrival::{
    backflow_report, bohm_positions, bohm_trajectory, kijowski_converged,
    kijowski_normalization, position_quantile, BackflowReport, BohmDistribution, TrajectoryOptions,
    BACKFLOW_BOUND,
};
use backflow_core::capdesign::{gradient, objective, optimize, survivals, DesignError};
use backflow_core::capscatter::{
    absorption_rate, history, CapEvolution, DwellTime, LayeredPotential, TotalAbsorption, Window,
    LONG_WINDOW_MAX_NODES,
};
use backflow_core::oracle::{propagate_certified, GridSpec};
use backflow_core::specfun::{faddeeva_w, faddeeva_w_prime, faddeeva_w_scaled};
use backflow_core::{Complex64, Error, Packet};

use crate::commands::{packet, read_potential, write_file};
use crate::config::RunConfig;
use crate::{Failure, Status};

const FADDEEVA_GRID: &str = include_str!("../../core/tests/data/faddeeva_grid.txt");

pub const CHECKS: &[&str] = &[
    "specfun.grid",
    "specfun.identities",
    "design.gradient",
    "design.target",
    "scatter.flux_identity",
    "scatter.absorption",
    "scatter.rate_methods",
    "scatter.dwell_delay",
    "arrival.backflow_bound",
    "arrival.emission",
    "arrival.kijowski",
    "arrival.bohm",
    "arrival.trajectories",
    "oracle.equivalence",
    "oracle.free",
    "quadrature.doubling",
];

// samples of the reporting window used by the sup-norm checks
const SCAN: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

impl Outcome {
    fn label(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: &'static str,
    pub outcome: Outcome,
    pub detail: String,
}

type Verdict = Result<(bool, String), Error>;

struct Suite<'a> {
    c: &'a RunConfig,
    pot: LayeredPotential,
    packet: Packet,
    evo: OnceCell<Result<CapEvolution, Error>>,
    history: OnceCell<Result<(DwellTime, TotalAbsorption), Error>>,
    backflow: OnceCell<Result<BackflowReport, Error>>,
}

fn cached<T>(cell: &OnceCell<Result<T, Error>>, f: impl FnOnce() -> Result<T, Error>) -> Result<&T, Error> {
    cell.get_or_init(f).as_ref().map_err(Clone::clone)
}

impl Suite<'_> {
    fn scan(&self) -> Vec<f64> {
        backflow_core::arrival::time_grid(self.c.time.start, self.c.time.end, SCAN)
    }

    fn evo(&self) -> Result<&CapEvolution, Error> {
        cached(&self.evo, || {
            let t = self.c.time;
            let w = Window::new((0.0, self.pot.width()), (t.start, t.end));
            Ok(CapEvolution::converged(&self.pot, &self.packet, &w, self.c.quadrature.tol)?)
        })
    }

    fn history(&self) -> Result<&(DwellTime, TotalAbsorption), Error> {
        cached(&self.history, || Ok(history(&self.pot, &self.packet, self.c.history)?))
    }

    fn backflow(&self) -> Result<&BackflowReport, Error> {
        cached(&self.backflow, || {
            let (a, b) = self.c.history;
            let grid = backflow_core::arrival::time_grid(a, b, 12_001);
            Ok(backflow_report(&self.packet, &grid)?)
        })
    }

    fn oracle_times(&self) -> [f64; 3] {
        let t = self.c.time;
        [0.1875, 0.4375, 0.75].map(|f| t.start + f * (t.end - t.start))
    }

    fn run(&self, name: &str) -> Verdict {
        match name {
            "specfun.grid" => specfun_grid(),
            "specfun.identities" => specfun_identities(),
            "design.gradient" => self.design_gradient(),
            "design.target" => self.design_target(),
            "scatter.flux_identity" => self.flux_identity(),
            "scatter.absorption" => self.absorption(),
            "scatter.rate_methods" => self.rate_methods(),
            "scatter.dwell_delay" => self.dwell_delay(),
            "arrival.backflow_bound" => self.backflow_bound(),
            "arrival.emission" => self.emission(),
            "arrival.kijowski" => self.kijowski(),
            "arrival.bohm" => self.bohm(),
            "arrival.trajectories" => self.trajectories(),
            "oracle.equivalence" => self.oracle_equivalence(),
            "oracle.free" => self.oracle_free(),
            "quadrature.doubling" => self.doubling(),
            _ => unreachable!("unlisted check {name}"),
        }
    }

    fn design_gradient(&self) -> Verdict {
        // away from the optimum, where the gradient is not small, and with
        // every layer absorbing enough that the steps keep Im V < 0
        let layers: Vec<Complex64> = self
            .pot
            .layers()
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = 1.0 + 0.1 * (j + 1) as f64;
                Complex64::new(v.re, -v.im.abs().max(0.1 * v.re.abs()).max(1.0)) * s
            })
            .collect();
        let spec = &self.c.design;
        let w = self.pot.width();
        let at = |l: Vec<Complex64>| LayeredPotential::new(w, l).map_err(Error::from);
        let base = at(layers.clone())?;
        let g = gradient(&base, spec)?;
        let f0 = objective(&base, spec)?;
        let (mut worst, mut ok) = (0.0f64, true);
        for j in 0..layers.len() {
            for (dir, comp) in [(Complex64::new(1.0, 0.0), g[j].re), (Complex64::new(0.0, 1.0), g[j].im)] {
                let h = 1e-6 * layers[j].norm();
                let (mut up, mut dn) = (layers.clone(), layers.clone());
                up[j] += h * dir;
                dn[j] -= h * dir;
                let num = (objective(&at(up)?, spec)? - objective(&at(dn)?, spec)?) / (2.0 * h);
                // round-off in f over the step
                let floor = 1e-13 * f0.max(1.0) / h;
                let d = (num - comp).abs();
                ok &= d <= 1e-5 * comp.abs() + floor;
                worst = worst.max(d / comp.abs());
            }
        }
        Ok((ok, format!("worst relative deviation {worst:.2e} (limit 1e-5)")))
    }

    fn design_target(&self) -> Verdict {
        let s = survivals(&self.pot, &self.c.design.check_momenta(), &self.c.units)?;
        let max = s.iter().copied().fold(0.0, f64::max);
        let target = self.c.design.target;
        Ok((
            max < target,
            format!("max S {max:.3e} on {} momenta (target {target:e})", s.len()),
        ))
    }

    fn flux_identity(&self) -> Verdict {
        let evo = self.evo()?;
        let probe = evo.detector();
        let (mut worst, mut peak) = (0.0f64, 0.0f64);
        for t in self.scan() {
            let jf = self.packet.flux(0.0, t)?;
            let jc = evo.sample(&probe, t)?.flux_origin;
            worst = worst.max((jf - jc).abs());
            peak = peak.max(jf);
        }
        let rel = worst / peak;
        Ok((rel <= 1e-3, format!("sup |J_cap - J_free| = {rel:.3e} of peak (limit 1e-3)")))
    }

    fn absorption(&self) -> Verdict {
        let (_, total) = self.history()?;
        let d = (total.time_domain - total.momentum_domain).abs();
        Ok((
            total.momentum_domain >= 0.999 && d < 1e-6,
            format!(
                "absorbed {:.6} (floor 0.999), time vs momentum {d:.2e} (limit 1e-6)",
                total.momentum_domain
            ),
        ))
    }

    fn peak_rate(&self) -> Result<(f64, f64), Error> {
        let evo = self.evo()?;
        let probe = evo.detector();
        let mut best = (self.c.time.start, 0.0);
        for t in self.scan() {
            let r = evo.sample(&probe, t)?.detector.rate;
            if r > best.1 {
                best = (t, r);
            }
        }
        Ok(best)
    }

    fn rate_methods(&self) -> Verdict {
        let (t, peak) = self.peak_rate()?;
        let r = absorption_rate(&self.pot, &self.packet, t)?;
        let d = (r.volume - r.finite_difference).abs() / peak;
        Ok((d <= 1e-6, format!("volume vs d/dt of the norm at t = {t:.3e}: {d:.2e} of peak (limit 1e-6)")))
    }

    fn dwell_delay(&self) -> Verdict {
        let (dwell, _) = self.history()?;
        let ti = dwell.integrals;
        let delay = ti.absorbed_moment / ti.absorbed - ti.flux_origin_moment / ti.flux_origin;
        let rel = delay / dwell.value - 1.0;
        Ok((
            rel.abs() <= 0.01,
            format!("delay {delay:.5e}, tau_D {:.5e}, relative {rel:.2e} (limit 1e-2)", dwell.value),
        ))
    }

    fn backflow_bound(&self) -> Verdict {
        let r = self.backflow()?;
        let peak = self.peak_free_flux()?;
        let mut ok = true;
        let mut largest = 0.0f64;
        for i in &r.intervals {
            largest = largest.max(i.magnitude);
            ok &= i.magnitude > 0.0 && i.magnitude < BACKFLOW_BOUND;
            for t in [i.start, i.end] {
                ok &= self.packet.flux(0.0, t)?.abs() <= 1e-10 * peak;
            }
        }
        Ok((
            ok,
            format!("{} interval(s), largest backflow {largest:.4e} (bound {BACKFLOW_BOUND})", r.intervals.len()),
        ))
    }

    fn peak_free_flux(&self) -> Result<f64, Error> {
        let mut peak = 0.0f64;
        for t in self.scan() {
            peak = peak.max(self.packet.flux(0.0, t)?);
        }
        Ok(peak)
    }

    fn emission(&self) -> Verdict {
        let evo = self.evo()?;
        let probe = evo.detector();
        let mut ok = true;
        for t in self.scan() {
            ok &= evo.sample(&probe, t)?.detector.rate >= 0.0;
        }
        let t = self.c.time;
        let inside: Vec<f64> = self
            .backflow()?
            .intervals
            .iter()
            .map(|i| 0.5 * (i.start + i.end))
            .filter(|m| (t.start..=t.end).contains(m))
            .collect();
        let mut emitted = 0;
        for &m in &inside {
            let r = absorption_rate(&self.pot, &self.packet, m)?;
            if r.left_rate > 0.0 && r.volume > 0.0 {
                emitted += 1;
            }
        }
        Ok((
            ok && emitted == inside.len(),
            format!(
                "dN-/dt > 0 at {emitted}/{} backflow midpoints, -dN/dt >= 0 on the scan: {ok}",
                inside.len()
            ),
        ))
    }

    fn kijowski(&self) -> Verdict {
        let n = kijowski_normalization(&self.packet, 1e-8)?;
        let tol = self.c.quadrature.kijowski_tol;
        let mut times = self.scan();
        for i in &self.backflow()?.intervals {
            times.extend(backflow_core::arrival::time_grid(i.start, i.end, 21));
        }
        let mut least = f64::INFINITY;
        for t in times {
            least = least.min(kijowski_converged(&self.packet, t, tol)?);
        }
        let d = (n - 1.0).abs();
        Ok((
            d < 1e-6 && least > 0.0,
            format!("normalization error {d:.2e} (limit 1e-6), min {least:.3e}"),
        ))
    }

    fn bohm(&self) -> Verdict {
        let b = BohmDistribution::new(&self.packet, self.c.history, 12_001)?;
        let d = (b.denominator - 1.0 - 2.0 * b.backflow.total).abs();
        let mut worst = 0.0f64;
        for i in &b.backflow.intervals {
            let width = i.end - i.start;
            let max_on = |a: f64, z: f64| -> Result<f64, Error> {
                let mut m = 0.0f64;
                for t in backflow_core::arrival::time_grid(a, z, 201) {
                    m = m.max(b.value(t)?);
                }
                Ok(m)
            };
            let inside = max_on(i.start, i.end)?;
            let before = max_on(i.start - 4.0 * width, i.start)?;
            for t in [i.start, i.end] {
                worst = worst.max(b.value(t)? / inside.min(before));
            }
        }
        Ok((
            d < 1e-10 && worst < 0.01,
            format!("denominator - 1 - 2 backflow = {d:.2e}, cusp/neighbour max {worst:.2e} (limit 1e-2)"),
        ))
    }

    fn trajectories(&self) -> Verdict {
        let t = self.c.time;
        let opts = TrajectoryOptions::default();
        let times = backflow_core::arrival::time_grid(t.start, t.end, 121);
        let mut crossed = 0;
        for j in 0..20 {
            let q = 0.05 + 0.9 * j as f64 / 19.0;
            let xa = position_quantile(&self.packet, q, t.start)?;
            let a = bohm_positions(&self.packet, xa, &times, &opts)?;
            let b = bohm_positions(&self.packet, xa + 1e-3, &times, &opts)?;
            if a.iter().zip(&b).any(|(u, v)| u >= v) {
                crossed += 1;
            }
        }
        let mut counts = Vec::new();
        for i in &self.backflow()?.intervals {
            if i.start < t.start || i.end > t.end {
                continue;
            }
            let lo = self.packet.half_line_norms(i.start)?.0;
            let hi = self.packet.half_line_norms(i.end)?.0;
            let x0 = position_quantile(&self.packet, 0.5 * (lo + hi), t.start)?;
            let path = bohm_trajectory(&self.packet, x0, (t.start, t.end), &opts)?;
            counts.push(backflow_core::arrival::origin_crossings(&path));
        }
        Ok((
            crossed == 0 && counts.iter().all(|&n| n == 3),
            format!("{crossed}/20 pairs crossed; origin crossings per backflow trajectory {counts:?}"),
        ))
    }

    fn oracle_equivalence(&self) -> Verdict {
        let spec = GridSpec::default();
        let t0 = self.c.time.start;
        let times = self.oracle_times();
        let evo = CapEvolution::converged_with_cap(
            &self.pot,
            &self.packet,
            &Window::new(spec.domain, (t0, times[2])),
            1e-9,
            LONG_WINDOW_MAX_NODES,
        )?;
        let window = (-0.5, self.pot.width());
        let (run, change) = propagate_certified(
            &spec,
            &self.pot,
            &self.c.units,
            |xs| amplitudes(&evo, xs, t0),
            t0,
            &times,
            window,
            1e-7,
        )?;
        let mut worst = 0.0f64;
        for c in &run.checkpoints {
            worst = worst.max(c.l2_distance(|xs| amplitudes(&evo, xs, c.t), window));
        }
        Ok((
            worst < 1e-6,
            format!("L2 distance {worst:.2e} at 3 times (limit 1e-6), step halving {change:.2e}"),
        ))
    }

    fn oracle_free(&self) -> Verdict {
        let free = LayeredPotential::free(self.pot.width(), self.pot.len());
        let times = self.oracle_times();
        let w = Window::new((-0.5, self.pot.width()), (times[0], times[2]));
        let evo = CapEvolution::converged(&free, &self.packet, &w, 1e-11)?;
        let mut worst = 0.0f64;
        for t in times {
            for k in 0..=102 {
                let x = -0.5 + (0.5 + self.pot.width()) * k as f64 / 102.0;
                worst = worst.max((evo.amplitude(x, t)? - self.packet.amplitude(x, t)?).norm());
            }
        }
        Ok((worst < 1e-9, format!("V = 0 vs closed form {worst:.2e} (limit 1e-9)")))
    }

    fn doubling(&self) -> Verdict {
        let evo = self.evo()?;
        let fine = evo.refined()?;
        let tol = self.c.quadrature.tol;
        let mut worst = 0.0f64;
        let t = self.c.time;
        for ti in backflow_core::arrival::time_grid(t.start, t.end, 41) {
            for x in [0.0, 0.5 * self.pot.width(), self.pot.width()] {
                let a = evo.amplitude(x, ti)?;
                let b = fine.amplitude(x, ti)?;
                worst = worst.max((a - b).norm() / b.norm().max(1.0));
            }
        }
        let err = self.history()?.0.integrals.error;
        Ok((
            worst <= tol && err <= 1e-9,
            format!(
                "amplitude change on doubling {worst:.2e} (limit {tol:e}), time integral error {err:.2e} (limit 1e-9)"
            ),
        ))
    }
}

// NaN on failure, which the distance checks then reject
fn amplitudes(evo: &CapEvolution, xs: &[f64], t: f64) -> Vec<Complex64> {
    evo.amplitudes(xs, t)
        .unwrap_or_else(|_| vec![Complex64::new(f64::NAN, 0.0); xs.len()])
}

fn specfun_grid() -> Verdict {
    let mut worst = 0.0f64;
    let mut n = 0;
    for line in FADDEEVA_GRID.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let v: Vec<f64> = line.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        let (z, w) = (Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]));
        worst = worst.max((faddeeva_w(z)? - w).norm() / w.norm());
        n += 1;
    }
    Ok((worst <= 1e-12, format!("worst relative error {worst:.2e} over {n} points (limit 1e-12)")))
}

fn specfun_identities() -> Verdict {
    let mut worst = 0.0f64;
    let mut slope = 0.0f64;
    for i in 0..15 {
        for j in 0..15 {
            let z = Complex64::new(-7.0 + i as f64, -3.0 + 0.6 * j as f64);
            let w = faddeeva_w(z)?;
            // mirror symmetry w(-conj z) = conj w(z)
            worst = worst.max((faddeeva_w(-z.conj())? - w.conj()).norm() / w.norm());
            let s = 0.3 * i as f64;
            worst = worst.max((faddeeva_w_scaled(z, s)? - (-s).exp() * w).norm() / ((-s).exp() * w.norm()));
            let h = 1e-5;
            let fd = (faddeeva_w(z + h)? - faddeeva_w(z - h)?) / (2.0 * h);
            let d = faddeeva_w_prime(z)?;
            slope = slope.max((fd - d).norm() / d.norm().max(1.0));
        }
    }
    worst = worst.max((faddeeva_w(Complex64::new(0.0, 0.0))? - 1.0).norm());
    Ok((
        worst <= 1e-12 && slope <= 1e-8,
        format!("symmetry and scaling {worst:.2e} (limit 1e-12), derivative vs differences {slope:.2e} (limit 1e-8)"),
    ))
}

fn check_skips(skip: &[String]) -> Result<(), Failure> {
    for s in skip {
        if !CHECKS.iter().any(|c| skipped(c, std::slice::from_ref(s))) {
            return Err(Failure::config(format!("--skip {s}: no such check or group")));
        }
    }
    Ok(())
}

fn skipped(name: &str, skip: &[String]) -> bool {
    skip.iter().any(|s| name == s || name.strip_prefix(s.as_str()).is_some_and(|r| r.starts_with('.')))
}

pub fn table(rows: &[Row]) -> String {
    let mut out = String::new();
    let width = CHECKS.iter().map(|c| c.len()).max().unwrap_or(0);
    writeln!(out, "{:width$}  {:6}  detail", "check", "status").unwrap();
    for r in rows {
        writeln!(out, "{:width$}  {:6}  {}", r.name, r.outcome.label(), r.detail).unwrap();
    }
    let count = |o| rows.iter().filter(|r| r.outcome == o).count();
    writeln!(
        out,
        "{} passed, {} failed, {} skipped",
        count(Outcome::Pass),
        count(Outcome::Fail),
        count(Outcome::Skip)
    )
    .unwrap();
    out
}

pub fn validate(c: &RunConfig, potential: Option<PathBuf>, out: Option<PathBuf>, skip: &[String]) -> Result<Status, Failure> {
    check_skips(skip)?;
    let pot = match potential.or_else(|| c.output.potential.clone()) {
        Some(p) => read_potential(&p)?,
        None => match optimize(&c.design, c.seed) {
            Ok(r) => r.potential,
            Err(DesignError::TargetMissed(r)) => r.potential,
            Err(e) => return Err(Failure::numeric(e)),
        },
    };
    let suite = Suite {
        c,
        pot,
        packet: packet(c)?,
        evo: OnceCell::new(),
        history: OnceCell::new(),
        backflow: OnceCell::new(),
    };
    let mut rows = Vec::new();
    for &name in CHECKS {
        let row = if skipped(name, skip) {
            Row {
                name,
                outcome: Outcome::Skip,
                detail: "skipped".into(),
            }
        } else {
            let (outcome, detail) = match suite.run(name) {
                Ok((true, d)) => (Outcome::Pass, d),
                Ok((false, d)) => (Outcome::Fail, d),
                Err(e) => (Outcome::Fail, format!("error: {e}")),
            };
            Row { name, outcome, detail }
        };
        eprintln!("{name}: {}", row.outcome.label());
        rows.push(row);
    }
    let text = table(&rows);
    print!("{text}");
    if let Some(p) = out {
        write_file(&p, &text)?;
    }
    if rows.iter().any(|r| r.outcome == Outcome::Fail) {
        Ok(Status::ValidationFailed)
    } else {
        Ok(Status::Ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skip_matches_names_and_groups() {
        let s = vec!["oracle".to_string()];
        assert!(skipped("oracle.free", &s));
        assert!(!skipped("specfun.grid", &s));
        assert!(!skipped("oracles.x", &s));
        assert!(skipped("design.target", &["design.target".to_string()]));
        assert!(check_skips(&["oracle".into(), "arrival.bohm".into()]).is_ok());
        assert!(check_skips(&["orac".into()]).is_err());
    }

    #[test]
    fn special_function_checks_pass() {
        assert!(specfun_grid().unwrap().0);
        let (ok, detail) = specfun_identities().unwrap();
        assert!(ok, "{detail}");
    }

    #[test]
    fn table_counts_outcomes() {
        let rows = [
            Row { name: "a", outcome: Outcome::Pass, detail: String::new() },
            Row { name: "b", outcome: Outcome::Skip, detail: "skipped".into() },
        ];
        assert!(table(&rows).ends_with("1 passed, 0 failed, 1 skipped\n"));
    }
}
