//! Scenario matrices: the Cartesian product of densities, protocols and
//! seeds over a shared base configuration, executed as isolated runs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::engine::{self, SimReport};
use crate::error::{Error, Result};
use crate::forwarding::{ProtocolKind, SuppressionMode};
use crate::metrics;

/// One point on the protocol axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolChoice {
    Udc(SuppressionMode),
    Slotted1,
}

impl ProtocolChoice {
    pub fn udc(mode: SuppressionMode) -> Self {
        ProtocolChoice::Udc(mode)
    }

    /// The four suppression levels followed by the slotted-1 baseline.
    pub fn all() -> Vec<ProtocolChoice> {
        SuppressionMode::ALL
            .into_iter()
            .map(ProtocolChoice::udc)
            .chain([ProtocolChoice::Slotted1])
            .collect()
    }

    pub fn kind(self) -> ProtocolKind {
        match self {
            ProtocolChoice::Udc(_) => ProtocolKind::Udc,
            ProtocolChoice::Slotted1 => ProtocolKind::Slotted1,
        }
    }

    pub fn mode(self) -> Option<SuppressionMode> {
        match self {
            ProtocolChoice::Udc(m) => Some(m),
            ProtocolChoice::Slotted1 => None,
        }
    }

    pub fn apply(self, cfg: &mut SimConfig) {
        cfg.protocol.kind = self.kind();
        if let Some(m) = self.mode() {
            cfg.protocol.suppression = m;
        }
    }
}

impl fmt::Display for ProtocolChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolChoice::Udc(m) => write!(f, "udc-{m}"),
            ProtocolChoice::Slotted1 => f.write_str("slotted1"),
        }
    }
}

impl FromStr for ProtocolChoice {
    type Err = Error;

    /// Accepts `slotted1`, a bare mode such as `weak`, or `udc-weak` / `udc:weak`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Ok(ProtocolKind::Slotted1) = lower.parse::<ProtocolKind>() {
            return Ok(ProtocolChoice::Slotted1);
        }
        let mode = lower
            .strip_prefix("udc-")
            .or_else(|| lower.strip_prefix("udc:"))
            .unwrap_or(&lower);
        mode.parse::<SuppressionMode>()
            .map(ProtocolChoice::udc)
            .map_err(|_| Error::config("matrix.protocols", format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    /// Nodes per km of road.
    pub densities: Vec<f64>,
    /// Names accepted by [`ProtocolChoice::from_str`].
    pub protocols: Vec<String>,
    pub seeds: Vec<u64>,
}

impl MatrixSpec {
    /// 4 densities x 5 protocols x 3 seeds.
    pub fn replication() -> Self {
        Self {
            densities: vec![4.0, 8.0, 16.0, 42.0],
            protocols: ProtocolChoice::all().iter().map(ToString::to_string).collect(),
            seeds: vec![1, 2, 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.densities.is_empty() {
            return Err(Error::config("matrix.densities", "must not be empty"));
        }
        if let Some(d) = self.densities.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::config("matrix.densities", format!("density {d} must be positive")));
        }
        if self.protocols.is_empty() {
            return Err(Error::config("matrix.protocols", "must not be empty"));
        }
        self.choices()?;
        if self.seeds.is_empty() {
            return Err(Error::config("matrix.seeds", "must not be empty"));
        }
        Ok(())
    }

    pub fn choices(&self) -> Result<Vec<ProtocolChoice>> {
        self.protocols.iter().map(|p| p.parse()).collect()
    }

    /// Every run of the matrix, ordered by density, protocol, then seed.
    pub fn plan(&self, base: &SimConfig) -> Vec<RunSpec> {
        let choices = self.choices().expect("validated matrix");
        let mut runs = Vec::with_capacity(self.densities.len() * choices.len() * self.seeds.len());
        for &density in &self.densities {
            for &protocol in &choices {
                for &seed in &self.seeds {
                    let mut config = base.clone();
                    config.mobility.density = density;
                    config.seed = seed;
                    protocol.apply(&mut config);
                    runs.push(RunSpec {
                        run_id: format!("d{density}-{protocol}-s{seed}"),
                        density,
                        protocol,
                        seed,
                        config,
                    });
                }
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub density: f64,
    pub protocol: ProtocolChoice,
    pub seed: u64,
    pub config: SimConfig,
}

impl RunSpec {
    /// A single run outside any matrix.
    pub fn single(config: SimConfig) -> Self {
        let protocol = match config.protocol.kind {
            ProtocolKind::Udc => ProtocolChoice::udc(config.protocol.suppression),
            ProtocolKind::Slotted1 => ProtocolChoice::Slotted1,
        };
        Self {
            run_id: format!("d{}-{}-s{}", config.mobility.density, protocol, config.seed),
            density: config.mobility.density,
            protocol,
            seed: config.seed,
            config,
        }
    }
}

/// One `summary.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub density: f64,
    pub protocol: String,
    pub mode: String,
    pub seed: u64,
    pub sensing_mean: f64,
    pub efficiency: Option<f64>,
    pub pct_sup: f64,
    pub pct_col: f64,
    pub pct_lowsnr: f64,
    pub pct_delivered: f64,
}

impl SummaryRow {
    pub fn from_report(spec: &RunSpec, report: &SimReport) -> Self {
        let drops = metrics::drop_analysis(report);
        SummaryRow {
            density: spec.density,
            protocol: spec.protocol.kind().as_str().to_string(),
            mode: spec.protocol.mode().map_or("none", SuppressionMode::as_str).to_string(),
            seed: spec.seed,
            sensing_mean: metrics::sensing_accuracy(report).mean,
            efficiency: metrics::network_efficiency(report),
            pct_sup: drops.pct_suppression,
            pct_col: drops.pct_collision,
            pct_lowsnr: drops.pct_low_snr,
            pct_delivered: drops.pct_delivered,
        }
    }

    /// Series label used for plot-ready tables.
    pub fn series(&self) -> String {
        if self.protocol == ProtocolKind::Slotted1.as_str() {
            self.protocol.clone()
        } else {
            format!("{}-{}", self.protocol, self.mode)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub result: std::result::Result<SummaryRow, String>,
}

/// Executes `runs` on up to `parallelism` threads. `sink` receives each
/// finished report (to persist it) before it is dropped. Outcomes come back
/// in plan order regardless of scheduling; a failed run does not stop the rest.
pub fn run_matrix<F>(runs: &[RunSpec], parallelism: usize, sink: F) -> Vec<RunOutcome>
where
    F: Fn(&RunSpec, &SimReport) -> Result<()> + Sync,
{
    let one = |spec: &RunSpec| -> RunOutcome {
        let result = engine::run(&spec.config)
            .and_then(|report| {
                sink(spec, &report)?;
                Ok(SummaryRow::from_report(spec, &report))
            })
            .map_err(|e| e.to_string());
        RunOutcome {
            run_id: spec.run_id.clone(),
            result,
        }
    };
    let threads = parallelism.max(1);
    if threads == 1 {
        return runs.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| runs.par_iter().map(one).collect()),
        Err(_) => runs.iter().map(one).collect(),
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Seed-averaged `metric` per density (rows) and protocol series (columns):
/// `density,<series...>`. Missing values are left empty.
pub fn write_series_csv<W: Write>(rows: &[SummaryRow], metric: fn(&SummaryRow) -> Option<f64>, w: W) -> Result<()> {
    let mut series: Vec<String> = rows.iter().map(SummaryRow::series).collect();
    series.sort();
    series.dedup();
    let mut densities: Vec<f64> = rows.iter().map(|r| r.density).collect();
    densities.sort_by(f64::total_cmp);
    densities.dedup();
    let mut cells: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(v) = metric(r) {
            let e = cells.entry((r.density.to_string(), r.series())).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["density".to_string()];
    header.extend(series.iter().cloned());
    out.write_record(&header)?;
    for d in densities {
        let mut rec = vec![d.to_string()];
        for s in &series {
            rec.push(match cells.get(&(d.to_string(), s.clone())) {
                Some((sum, n)) => (sum / *n as f64).to_string(),
                None => String::new(),
            });
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Seed-averaged fate shares in long form:
/// `density,series,pct_sup,pct_col,pct_lowsnr,pct_delivered`.
pub fn write_drop_table<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut groups: BTreeMap<(u64, String), ([f64; 4], usize)> = BTreeMap::new();
    for r in rows {
        // total_cmp order of non-negative floats matches their bit order
        let e = groups.entry((r.density.to_bits(), r.series())).or_insert(([0.0; 4], 0));
        for (acc, v) in e.0.iter_mut().zip([r.pct_sup, r.pct_col, r.pct_lowsnr, r.pct_delivered]) {
            *acc += v;
        }
        e.1 += 1;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["density", "series", "pct_sup", "pct_col", "pct_lowsnr", "pct_delivered"])?;
    for ((bits, series), (sums, n)) in groups {
        let mut rec = vec![f64::from_bits(bits).to_string(), series];
        rec.extend(sums.iter().map(|s| (s / n as f64).to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
