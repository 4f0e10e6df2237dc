//! Run configuration, orchestration and on-disk records
//!
//! A run directory holds, in write order:
//!
//! | file             | content                                          |
//! |------------------|--------------------------------------------------|
//! | `config.toml`    | echo of the effective configuration              |
//! | `m0.llgf`        | initial data snapshot                            |
//! | `iterations.csv` | one row per iteration                             |
//! | `timings.csv`    | wall-clock seconds per iteration                 |
//! | `final.llgf`     | final space-time field                           |
//! | `final_norm.csv` | `H^{k,2k}` report of the final field             |
//! | `report.json`    | status, verification and diagnostics             |
//!
//! Everything except `timings.csv` is a deterministic function of the
//! configuration.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::field::{read_snapshot, write_field_snapshot, write_snapshot};
use crate::field::{PhysicsParams, SpaceTimeField, VectorField};
use crate::grid::{CosineBasis, SpaceGrid, TimeGrid};
use crate::heat::{manufactured_study, heat_solve, HeatScheme, HeatSolveConfig, MmsRow};
use crate::initdata::{generate_m0, InitialDataConfig};
use crate::iterate::{q_diagnostics, telescoping_gap, IterateConfig, IterationRow, QDiagnostics, Solver, Status};
use crate::norms::{spacetime_norm, spacetime_report_coeffs, NormReport, NormSpec};
use crate::oracle::{evolve, OracleConfig};
use crate::residual::LOperator;
use crate::scalar::{Dd, Real};
use crate::verify::{check_solution, compare_oracle, OracleComparison, VerificationReport};
use crate::{Error, Result, VERSION};

/// Iterations entering the geometric fit of `q`.
pub const FIT_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "f64")]
    F64,
    #[default]
    #[serde(rename = "double-double")]
    DoubleDouble,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub dim: usize,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsConfig {
    #[serde(default = "default_mms_steps")]
    pub steps: Vec<usize>,
    #[serde(default = "default_mms_schemes")]
    pub schemes: Vec<HeatScheme>,
    /// final time of the manufactured problem (the run's `t_final` when absent)
    #[serde(default)]
    pub t_final: Option<f64>,
}

fn default_mms_steps() -> Vec<usize> {
    vec![40, 80, 160]
}

fn default_mms_schemes() -> Vec<HeatScheme> {
    vec![HeatScheme::ImplicitEuler, HeatScheme::CrankNicolson, HeatScheme::Bdf2]
}

impl Default for MmsConfig {
    fn default() -> Self {
        Self { steps: default_mms_steps(), schemes: default_mms_schemes(), t_final: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    Epsilon,
    N,
    Steps,
    K,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// for `n` sweeps: scale `steps` with `n` so that `h` and `dt` refine together
    #[serde(default)]
    pub couple_steps: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub physics: PhysicsParams,
    pub space: SpaceConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initdata: InitialDataConfig,
    #[serde(default)]
    pub iterate: IterateConfig,
    #[serde(default)]
    pub heat: HeatSolveConfig,
    /// comparison against the time-stepper runs only when present
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub mms: Option<MmsConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    /// Parses and validates. Errors carry the TOML line and field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.space.dim, self.space.n)
    }

    pub fn tgrid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_final, self.time.steps)
    }

    /// Initial data with the run seed applied.
    pub fn initdata(&self) -> InitialDataConfig {
        InitialDataConfig { seed: self.seed, ..self.initdata.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let tgrid = self.tgrid()?;
        self.physics.validate()?;
        self.initdata().validate(grid)?;
        self.iterate.validate()?;
        tgrid.require_steps(2 * self.iterate.k + 1)?;
        if self.heat.scheme.backward_stencil().is_none() {
            return Err(Error::Config(format!(
                "heat.scheme = {:?} cannot drive the iteration; use implicit-euler or bdf2",
                self.heat.scheme
            )));
        }
        if let Some(o) = &self.oracle {
            o.step_size(grid, &self.physics)?;
        }
        if let Some(m) = &self.mms {
            if m.steps.len() < 2 || m.steps.iter().any(|&s| s < 2) {
                return Err(Error::Config("mms.steps needs at least two entries, each >= 2".into()));
            }
            if m.schemes.is_empty() {
                return Err(Error::Config("mms.schemes is empty".into()));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
            for &v in &s.values {
                self.sweep_entry(s, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// Configuration of one sweep entry.
    pub fn sweep_entry(&self, sweep: &SweepConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = RunConfig { sweep: None, mms: None, output_dir: None, ..self.clone() };
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("sweep value {v} must be a positive integer")))
            }
        };
        match sweep.parameter {
            SweepParameter::Epsilon => cfg.initdata.epsilon = value,
            SweepParameter::N => {
                let n = as_count(value)?;
                if sweep.couple_steps {
                    let steps = self.time.steps * n;
                    if steps % self.space.n != 0 {
                        return Err(Error::Config(format!("n = {n} does not scale steps to an integer")));
                    }
                    cfg.time.steps = steps / self.space.n;
                }
                cfg.space.n = n;
            }
            SweepParameter::Steps => cfg.time.steps = as_count(value)?,
            SweepParameter::K => cfg.iterate.k = as_count(value)?,
        }
        Ok(cfg)
    }
}

/// Machine-readable summary written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub precision: Precision,
    pub status: Status,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub verification: VerificationReport,
    pub oracle: Option<OracleComparison>,
    pub q: QDiagnostics,
    pub telescoping_gap: f64,
    /// `max ||m_l - m_l'|| / sum R_j`, when iterates were kept
    pub cauchy_audit: Option<f64>,
    pub pivot: [f64; 3],
    /// not written to disk; see `timings.csv`
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// In-memory result of a run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    pub rows: Vec<IterationRow>,
    pub step_seconds: Vec<f64>,
    pub report: RunReport,
    pub final_norm: NormReport,
    /// final iterate rounded to `f64`
    pub m: SpaceTimeField<f64>,
    pub m0: VectorField<f64>,
}

pub fn cmd_run(cfg: &RunConfig, out: Option<&Path>) -> Result<RunRecord> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F64 => execute::<f64>(cfg, out),
        Precision::DoubleDouble => execute::<Dd>(cfg, out),
    }
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_rows(path: &Path, rows: &[IterationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ell", "r_norm", "big_r_norm", "q", "big_q", "m_norm", "m_seminorm", "modulus_dev"])?;
    for r in rows {
        w.write_record([
            r.ell.to_string(),
            format!("{:e}", r.r_norm),
            format!("{:e}", r.big_r_norm),
            r.q.map(|q| format!("{q:e}")).unwrap_or_default(),
            format!("{:e}", r.big_q),
            format!("{:e}", r.m_norm),
            format!("{:e}", r.m_seminorm),
            format!("{:e}", r.modulus_dev),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timings(path: &Path, secs: &[f64], total: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ell", "seconds"])?;
    for (i, s) in secs.iter().enumerate() {
        w.write_record([i.to_string(), format!("{s:.6}")])?;
    }
    w.write_record(["total".to_string(), format!("{total:.6}")])?;
    w.flush()?;
    Ok(())
}

fn execute<S: Real>(cfg: &RunConfig, out: Option<&Path>) -> Result<RunRecord> {
    let started = Instant::now();
    let grid = cfg.grid()?;
    let tgrid = cfg.tgrid()?;
    let m0 = generate_m0::<S>(&cfg.initdata(), grid)?;
    if let Some(out) = out {
        create_dir(out)?;
        fs::write(out.join("config.toml"), cfg.to_toml()?)?;
        write_field_snapshot(BufWriter::new(fs::File::create(out.join("m0.llgf"))?), &m0)?;
    }
    let solver = Solver::for_initial_data(&m0, tgrid, cfg.physics, cfg.heat, cfg.iterate.clone())?;
    let mut st = solver.initialize(&m0)?;
    while !st.status.is_terminal() {
        if let Err(e) = solver.step(&mut st) {
            if let Some(out) = out {
                write_rows(&out.join("iterations.csv"), &st.rows)?;
                fs::write(out.join("error.txt"), format!("{e}\n"))?;
            }
            return Err(e);
        }
    }
    let cauchy_audit = solver.cauchy_audit(&st)?;
    let tele = telescoping_gap(&st);
    let q = q_diagnostics(&st, FIT_WINDOW);
    let outcome = solver.finish(st)?;
    let st = outcome.state;

    let mut verification = check_solution(&solver, &st.m, &m0)?;
    let oracle = match &cfg.oracle {
        Some(ocfg) => {
            let (om, _) = evolve(&m0.cast::<f64>(), tgrid, &cfg.physics, ocfg)?;
            let cmp = compare_oracle(&st.m.cast::<f64>(), &om)?;
            verification.oracle_linf = Some(cmp.max);
            Some(cmp)
        }
        None => None,
    };
    let final_norm = spacetime_report_coeffs(&solver.basis, &tgrid, &st.m_coeffs, cfg.iterate.k)?;
    let pivot = solver.lop.pivot().map(|x| x.to_f64());
    let report = RunReport {
        version: VERSION.to_string(),
        precision: cfg.precision,
        status: st.status,
        iterations: st.ell,
        final_residual_norm: outcome.final_residual_norm,
        verification,
        oracle,
        q,
        telescoping_gap: tele,
        cauchy_audit,
        pivot,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let record = RunRecord {
        config: cfg.clone(),
        rows: st.rows.clone(),
        step_seconds: st.step_seconds.clone(),
        report,
        final_norm,
        m: st.m.cast(),
        m0: m0.cast(),
    };
    if let Some(out) = out {
        write_record(&record, out)?;
    }
    Ok(record)
}

fn write_record(rec: &RunRecord, out: &Path) -> Result<()> {
    write_rows(&out.join("iterations.csv"), &rec.rows)?;
    write_timings(&out.join("timings.csv"), &rec.step_seconds, rec.report.wall_seconds)?;
    write_snapshot(BufWriter::new(fs::File::create(out.join("final.llgf"))?), &rec.m)?;
    rec.final_norm.write_csv(fs::File::create(out.join("final_norm.csv"))?)?;
    let json = serde_json::to_string_pretty(&rec.report)?;
    fs::write(out.join("report.json"), json + "\n")?;
    Ok(())
}

/// Heat-solver refinement study on the manufactured solution, plus the
/// zero-forcing sanity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub rows: Vec<MmsRow>,
    /// `max |w|` for zero forcing (must be exactly 0)
    pub zero_forcing_max: f64,
}

pub fn cmd_mms(cfg: &RunConfig, out: Option<&Path>) -> Result<MmsReport> {
    cfg.validate()?;
    let mms = cfg.mms.clone().unwrap_or_default();
    match cfg.precision {
        Precision::F64 => mms_study::<f64>(cfg, &mms, out),
        Precision::DoubleDouble => mms_study::<Dd>(cfg, &mms, out),
    }
}

fn mms_study<S: Real>(cfg: &RunConfig, mms: &MmsConfig, out: Option<&Path>) -> Result<MmsReport> {
    let grid = cfg.grid()?;
    let m0 = generate_m0::<S>(&cfg.initdata(), grid)?;
    let lop = LOperator::build_centered(&cfg.physics, &m0)?;
    let t_final = mms.t_final.unwrap_or(cfg.time.t_final);
    let mut rows = vec![];
    for &scheme in &mms.schemes {
        rows.extend(manufactured_study::<S>(grid, t_final, &mms.steps, scheme, &lop, &cfg.physics)?);
    }
    let tgrid = TimeGrid::new(t_final, mms.steps[0])?;
    let zero = SpaceTimeField::<S>::zeros(grid, tgrid);
    let basis = CosineBasis::new(grid);
    let mut zero_forcing_max = 0.0f64;
    for &scheme in &mms.schemes {
        let w = heat_solve(&zero, &lop, &cfg.physics, &basis, &HeatSolveConfig { scheme })?;
        zero_forcing_max = zero_forcing_max.max(w.max_abs().to_f64());
    }
    let report = MmsReport { rows, zero_forcing_max };
    if let Some(out) = out {
        create_dir(out)?;
        fs::write(out.join("config.toml"), cfg.to_toml()?)?;
        let mut w = csv::Writer::from_path(out.join("mms.csv"))?;
        for r in &report.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        fs::write(out.join("mms.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub n: usize,
    pub steps: usize,
    pub epsilon: f64,
    pub k: usize,
    /// run status, or `error` when the run failed numerically
    pub status: String,
    pub iterations: usize,
    pub max_q: Option<f64>,
    pub fitted_q: Option<f64>,
    pub final_residual_norm: Option<f64>,
    pub smoothness_ratio: Option<f64>,
    pub modulus_dev: Option<f64>,
    pub oracle_linf: Option<f64>,
    /// observed order of the oracle gap against the previous row (n sweeps)
    pub oracle_order: Option<f64>,
}

pub fn cmd_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
    if let Some(out) = out {
        create_dir(out)?;
        fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(sweep.values.len());
    for (index, &value) in sweep.values.iter().enumerate() {
        let entry = cfg.sweep_entry(&sweep, value)?;
        let dir = out.map(|o| o.join(format!("entry_{index:02}")));
        let mut row = SweepRow {
            index,
            value,
            n: entry.space.n,
            steps: entry.time.steps,
            epsilon: entry.initdata.epsilon,
            k: entry.iterate.k,
            status: "error".into(),
            iterations: 0,
            max_q: None,
            fitted_q: None,
            final_residual_norm: None,
            smoothness_ratio: None,
            modulus_dev: None,
            oracle_linf: None,
            oracle_order: None,
        };
        match cmd_run(&entry, dir.as_deref()) {
            Ok(rec) => {
                let r = &rec.report;
                row.status = serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string();
                row.iterations = r.iterations;
                row.max_q = r.q.max_q;
                row.fitted_q = r.q.fitted_q;
                row.final_residual_norm = Some(r.final_residual_norm);
                row.smoothness_ratio = Some(r.verification.smoothness_ratio);
                row.modulus_dev = Some(r.verification.modulus_dev);
                row.oracle_linf = r.verification.oracle_linf;
            }
            Err(e) if is_numerical(&e) => {
                row.iterations = 0;
            }
            Err(e) => return Err(e),
        }
        if sweep.parameter == SweepParameter::N {
            if let (Some(prev), Some(gap)) = (rows.last(), row.oracle_linf) {
                if let Some(pg) = prev.oracle_linf {
                    row.oracle_order = Some((pg / gap).ln() / (row.n as f64 / prev.n as f64).ln());
                }
            }
        }
        rows.push(row);
    }
    if let Some(out) = out {
        let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

/// Errors that stem from the numerics rather than the input.
pub fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::OracleBlowUp(_) | Error::SingularModeMatrix(_))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// `M_b / M_a`; nodes `n` of `a` are matched with `ratio * n` of `b`
    pub step_ratio: usize,
    /// max-norm gap at each node of `a`
    pub per_slice: Vec<f64>,
    pub max_gap: f64,
    pub delta_final_residual_norm: f64,
    pub delta_modulus_dev: f64,
    pub delta_smoothness_ratio: f64,
    pub delta_iterations: i64,
}

fn load_field(dir: &Path) -> Result<SpaceTimeField<f64>> {
    let f = fs::File::open(dir.join("final.llgf"))?;
    read_snapshot::<f64, _>(std::io::BufReader::new(f))?.into_space_time()
}

fn load_report(dir: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?)
}

/// Diff of two run records. Both must share the spatial grid and `T`; the
/// finer time grid must refine the coarser by an integer factor.
pub fn cmd_compare(a: &Path, b: &Path) -> Result<CompareReport> {
    let (mut fa, mut fb) = (load_field(a)?, load_field(b)?);
    let (mut ra, mut rb) = (load_report(a)?, load_report(b)?);
    if fa.tgrid.steps() > fb.tgrid.steps() {
        std::mem::swap(&mut fa, &mut fb);
        std::mem::swap(&mut ra, &mut rb);
    }
    compare_fields(&fa, &fb).map(|(step_ratio, per_slice)| {
        let max_gap = per_slice.iter().cloned().fold(0.0, f64::max);
        CompareReport {
            step_ratio,
            per_slice,
            max_gap,
            delta_final_residual_norm: rb.final_residual_norm - ra.final_residual_norm,
            delta_modulus_dev: rb.verification.modulus_dev - ra.verification.modulus_dev,
            delta_smoothness_ratio: rb.verification.smoothness_ratio - ra.verification.smoothness_ratio,
            delta_iterations: rb.iterations as i64 - ra.iterations as i64,
        }
    })
}

/// Node-matched max-norm gaps; `a` has the coarser time grid.
pub fn compare_fields(a: &SpaceTimeField<f64>, b: &SpaceTimeField<f64>) -> Result<(usize, Vec<f64>)> {
    if a.grid() != b.grid() || a.tgrid.t_final() != b.tgrid.t_final() || b.tgrid.steps() % a.tgrid.steps() != 0 {
        return Err(Error::GridMismatch);
    }
    let ratio = b.tgrid.steps() / a.tgrid.steps();
    let gaps = a
        .slices
        .iter()
        .enumerate()
        .map(|(n, s)| {
            s.values
                .iter()
                .zip(&b.slices[n * ratio].values)
                .map(|(x, y)| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok((ratio, gaps))
}

/// `H^{k,2k}` report of a space-time snapshot.
pub fn cmd_norms(snapshot: &Path, k: usize) -> Result<NormReport> {
    let spec = NormSpec::new(k)?;
    let f = fs::File::open(snapshot)?;
    let snap = read_snapshot::<f64, _>(std::io::BufReader::new(f))?;
    if snap.header.steps == 0 {
        return Err(Error::Snapshot("norms need a space-time snapshot (M >= 1)".into()));
    }
    let field = snap.into_space_time()?;
    let basis = CosineBasis::new(field.grid());
    spacetime_norm(&basis, &field, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
precision = "f64"
[physics]
alpha = 1.0
c_e = 1.0
[space]
dim = 2
n = 8
[time]
t_final = 0.5
steps = 8
[initdata]
base_direction = [0.0, 0.0, 1.0]
epsilon = 0.02
modes = [{ k = [1], component = 0, amplitude = 1.0 }]
[iterate]
tol = 1e-6
max_iter = 30
diverge_window = 3
k = 2
[heat]
scheme = "bdf2"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(cfg.heat.scheme, HeatScheme::Bdf2);
        let again = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_field_names_the_line() {
        let bad = SMALL.replace("alpha = 1.0", "alhpa = 1.0");
        let err = RunConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("alhpa"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str(&SMALL.replace("n = 8", "n = 1")).is_err());
        assert!(RunConfig::from_toml_str(&SMALL.replace("\"bdf2\"", "\"crank-nicolson\"")).is_err());
        assert!(RunConfig::from_toml_str(&SMALL.replace("steps = 8", "steps = 3")).is_err());
        assert!(RunConfig::from_toml_str(&SMALL.replace("tol = 1e-6", "tol = -1.0")).is_err());
    }

    #[test]
    fn run_writes_a_reproducible_record() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let rec = cmd_run(&cfg, Some(&a)).unwrap();
        cmd_run(&cfg, Some(&b)).unwrap();
        assert_eq!(rec.report.status, Status::Converged);
        for f in ["config.toml", "m0.llgf", "iterations.csv", "final.llgf", "final_norm.csv", "report.json"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        assert!(a.join("timings.csv").exists());
        let cmp = cmd_compare(&a, &b).unwrap();
        assert_eq!(cmp.max_gap, 0.0);
        let norms = cmd_norms(&a.join("final.llgf"), 2).unwrap();
        assert!((norms.norm - rec.final_norm.norm).abs() < 1e-6 * norms.norm);
        assert!(cmd_norms(&a.join("m0.llgf"), 2).is_err());
    }

    #[test]
    fn compare_matches_refined_time_nodes() {
        let cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let fine = RunConfig { time: TimeConfig { t_final: 0.5, steps: 16 }, ..cfg.clone() };
        let other_grid = RunConfig { space: SpaceConfig { dim: 2, n: 12 }, ..cfg.clone() };
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s);
        cmd_run(&cfg, Some(&p("a"))).unwrap();
        cmd_run(&fine, Some(&p("b"))).unwrap();
        cmd_run(&other_grid, Some(&p("c"))).unwrap();
        let cmp = cmd_compare(&p("b"), &p("a")).unwrap();
        assert_eq!(cmp.step_ratio, 2);
        assert_eq!(cmp.per_slice.len(), 9);
        assert_eq!(cmp.per_slice[0], 0.0);
        assert!(cmp.max_gap > 0.0 && cmp.max_gap < 1e-3);
        assert!(matches!(cmd_compare(&p("a"), &p("c")), Err(Error::GridMismatch)));
    }

    #[test]
    fn sweep_entries_override_one_parameter() {
        let mut cfg = RunConfig::from_toml_str(SMALL).unwrap();
        let s = SweepConfig { parameter: SweepParameter::N, values: vec![16.0], couple_steps: true };
        let e = cfg.sweep_entry(&s, 16.0).unwrap();
        assert_eq!((e.space.n, e.time.steps), (16, 16));
        assert!(cfg.sweep_entry(&s, 2.5).is_err());
        cfg.sweep = Some(SweepConfig { parameter: SweepParameter::Epsilon, values: vec![0.01, 0.01], couple_steps: false });
        let rows = cmd_sweep(&cfg, None).unwrap();
        assert_eq!(rows[0], SweepRow { index: 0, ..rows[1].clone() });
        assert_eq!(rows[0].status, "converged");
    }

    #[test]
    fn mms_reports_slopes_and_exact_zero() {
        let mut cfg = RunConfig::from_toml_str(SMALL).unwrap();
        cfg.mms = Some(MmsConfig { t_final: Some(1.0), ..Default::default() });
        let rep = cmd_mms(&cfg, None).unwrap();
        assert_eq!(rep.zero_forcing_max, 0.0);
        assert_eq!(rep.rows.len(), 9);
        let last = |s: HeatScheme| rep.rows.iter().filter(|r| r.scheme == s).last().unwrap().slope.unwrap();
        assert!((last(HeatScheme::ImplicitEuler) - 1.0).abs() <= 0.1);
        assert!((last(HeatScheme::CrankNicolson) - 2.0).abs() <= 0.2);
    }
}
