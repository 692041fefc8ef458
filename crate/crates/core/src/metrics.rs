//! Trace recording and metric extraction: peak power, total energy, elapsed
//! time, per-cell energy distribution, and report/trace export.

use crate::engine::{Engine, TraceEvent};
use crate::error::{MeshError, Result};
use crate::exact::{Exact, Rat};
use num_traits::Zero;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Time-ordered samples of (model time, active squirrel count, active power).
#[derive(Debug, Clone)]
pub struct Trace {
    samples: Vec<TraceSample>,
}

#[derive(Debug, Clone)]
pub struct TraceSample {
    pub t: Exact,
    pub active: u64,
    pub power: Rat,
}

impl Trace {
    /// Build a trace from raw engine events by sweeping interval deltas.
    pub fn from_events(events: &[TraceEvent]) -> Trace {
        let mut deltas: Vec<(Exact, i64, Rat)> =
            events.iter().map(|e| (e.t, e.dcount, e.dpower)).collect();
        deltas.sort_by(|a, b| a.0.cmp(&b.0));
        let mut samples = Vec::new();
        let mut active = 0i64;
        let mut power = Rat::zero();
        let mut i = 0;
        while i < deltas.len() {
            let t = deltas[i].0;
            while i < deltas.len() && deltas[i].0 == t {
                active += deltas[i].1;
                power += deltas[i].2;
                i += 1;
            }
            debug_assert!(active >= 0, "negative active count in trace");
            samples.push(TraceSample {
                t,
                active: active.max(0) as u64,
                power,
            });
        }
        Trace { samples }
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Maximum number of simultaneously active squirrels.
    pub fn peak_power(&self) -> Result<u64> {
        if self.samples.is_empty() {
            return Err(MeshError::domain("peak power of an empty trace"));
        }
        Ok(self.samples.iter().map(|s| s.active).max().unwrap_or(0))
    }

    /// Exact integral of active power over time; must equal the ledger sum.
    pub fn energy_integral(&self) -> Exact {
        let mut total = Exact::zero();
        for w in self.samples.windows(2) {
            let dt = w[1].t - w[0].t;
            total += dt * w[0].power;
        }
        total
    }

    /// CSV rows with the stable header `time,active_count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,active_count\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{}", s.t.to_f64(), s.active);
        }
        out
    }
}

/// Per-run metrics with schema-stable JSON export (lexicographic keys).
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub algorithm: String,
    pub elapsed_time: f64,
    pub max_cell_energy: f64,
    pub mean_cell_energy: f64,
    pub params: ReportParams,
    pub peak_power: u64,
    pub total_energy: f64,
    pub verification: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportParams {
    pub adjacency: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    pub n: u32,
    pub s: u32,
    pub seed: u64,
    pub variant: String,
}

impl RunReport {
    pub fn from_engine(algorithm: &str, engine: &Engine, params: ReportParams) -> Result<Self> {
        let trace = Trace::from_events(engine.events());
        let total = engine.total_cell_energy();
        let n2 = (engine.n() as i128) * (engine.n() as i128);
        let mean = total * Rat::new(1, n2);
        let peak = if trace.is_empty() { 0 } else { trace.peak_power()? };
        Ok(RunReport {
            algorithm: algorithm.to_string(),
            elapsed_time: engine.elapsed().to_f64(),
            max_cell_energy: engine.max_cell_energy().to_f64(),
            mean_cell_energy: mean.to_f64(),
            params,
            peak_power: peak,
            total_energy: total.to_f64(),
            verification: BTreeMap::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    pub fn verification_passed(&self) -> bool {
        self.verification.values().all(|v| v == "pass")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Engine, ModelConfig};
    use crate::geometry::Dir;
    use crate::image::ImageGrid;

    #[test]
    fn single_squirrel_peak_and_energy() {
        let img = ImageGrid::filled(4, 0).unwrap();
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        for _ in 0..3 {
            eng.step_move(0, Dir::East).unwrap();
        }
        let trace = Trace::from_events(eng.events());
        assert_eq!(trace.peak_power().unwrap(), 1);
        assert_eq!(trace.energy_integral(), Exact::from_int(3));
        assert_eq!(eng.total_cell_energy(), Exact::from_int(3));
    }

    #[test]
    fn empty_trace_peak_is_error() {
        let trace = Trace::from_events(&[]);
        assert!(trace.peak_power().is_err());
    }

    #[test]
    fn report_keys_are_lexicographic() {
        let img = ImageGrid::filled(4, 0).unwrap();
        let eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        let report = RunReport::from_engine(
            "noop",
            &eng,
            ReportParams {
                adjacency: "edge4".into(),
                n: 4,
                s: 1,
                seed: 0,
                variant: "base".into(),
                ..Default::default()
            },
        )
        .unwrap();
        let json = report.to_json();
        let alg = json.find("\"algorithm\"").unwrap();
        let elapsed = json.find("\"elapsed_time\"").unwrap();
        let verif = json.find("\"verification\"").unwrap();
        assert!(alg < elapsed && elapsed < verif);
        assert!(json.contains("\"total_energy\":0.0"));
    }

    #[test]
    fn csv_header() {
        let trace = Trace::from_events(&[]);
        assert_eq!(trace.to_csv(), "time,active_count\n");
    }
}
