//! JSON and CSV persistence, digests, and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clearing::{DispatchSolution, TraceRow};
use crate::evaluation::{CostDistribution, SweepRow};
use crate::grid::NetworkCase;
use crate::risk::PriceSchedule;
use crate::SlotMatrix;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("solution was cleared on case {found}, not on the given case {expected}")]
    DigestMismatch { expected: String, found: String },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    from_json_str(&text).map_err(|message| IoError::Parse {
        path: path.display().to_string(),
        message,
    })
}

/// Parses JSON, reporting the field path and line/column on failure.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        format!(
            "at `{}` (line {}, column {}): {}",
            e.path(),
            inner.line(),
            inner.column(),
            inner
        )
    })
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &to_json_string(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| io_err(path, e))
}

/// Digest of the case's canonical JSON form, independent of file layout.
pub fn case_digest(case: &NetworkCase) -> String {
    sha256_hex(&serde_json::to_vec(case).expect("serializable case"))
}

pub fn load_case(path: &Path) -> Result<NetworkCase, IoError> {
    read_json(path)
}

pub fn load_prices(path: &Path) -> Result<PriceSchedule, IoError> {
    read_json(path)
}

/// Forecast mean with an optional noise scale, both `[slot][farm]` in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFile {
    pub forecast: SlotMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SlotMatrix>,
}

pub fn load_forecast(path: &Path) -> Result<ForecastFile, IoError> {
    read_json(path)
}

/// A cleared dispatch tied to the case it was cleared on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionArtifact {
    pub case_digest: String,
    pub solution: DispatchSolution,
}

impl SolutionArtifact {
    pub fn new(case: &NetworkCase, solution: DispatchSolution) -> Self {
        Self {
            case_digest: case_digest(case),
            solution,
        }
    }

    pub fn check_case(&self, case: &NetworkCase) -> Result<(), IoError> {
        let expected = case_digest(case);
        if expected != self.case_digest {
            return Err(IoError::DigestMismatch {
                expected,
                found: self.case_digest.clone(),
            });
        }
        Ok(())
    }
}

/// Resolved command, parameters, seeds, input digests and artifact names.
/// Wall times live in a separate `timings.json` so the manifest itself is
/// reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    /// Input file name → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            ..Self::default()
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters
            .insert(key.to_owned(), serde_json::to_value(value).expect("serializable parameter"));
        self
    }

    pub fn seed(&mut self, key: &str, seed: u64) -> &mut Self {
        self.seeds.insert(key.to_owned(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, IoError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }
}

/// Writes artifacts under one directory and records their names.
pub struct ArtifactDir {
    pub root: PathBuf,
    written: Vec<String>,
    timings: BTreeMap<String, serde_json::Value>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        write_text(&self.root.join(name), text)?;
        self.written.push(name.to_owned());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), IoError> {
        self.text(name, &to_json_string(value))
    }

    /// Records a wall-clock measurement for `timings.json`.
    pub fn timing(&mut self, label: &str, value: impl Serialize) {
        self.timings
            .insert(label.to_owned(), serde_json::to_value(value).expect("serializable timing"));
    }

    /// Writes `manifest.json` listing every artifact, then `timings.json`.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf, IoError> {
        self.written.sort();
        manifest.artifacts = self.written.clone();
        let path = self.root.join("manifest.json");
        write_json(&path, &manifest)?;
        write_json(&self.root.join("timings.json"), &self.timings)?;
        Ok(path)
    }
}

/// `slot,<col>_1,...` with one row per slot.
pub fn matrix_csv(prefix: &str, m: &SlotMatrix) -> String {
    let cols = m.first().map_or(0, Vec::len);
    let mut out = String::from("slot");
    for k in 1..=cols {
        let _ = write!(out, ",{prefix}_{k}");
    }
    out.push('\n');
    for (t, row) in m.iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,objective,primal_residual,dual_residual\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.iteration, r.objective, r.primal_residual, r.dual_residual
        );
    }
    out
}

/// Trace rows with wall time, for plotting; not byte-reproducible.
pub fn trace_timing_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,wall_ms\n");
    for r in trace {
        let _ = writeln!(out, "{},{:.3}", r.iteration, r.wall_ms);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("mu,generation_cost,cvar_term,total_wind,objective,error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mu,
            r.generation_cost,
            r.cvar_term,
            r.total_wind,
            r.objective,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    out
}

/// Long format `policy,cost,cdf` for several distributions.
pub fn cdf_csv(rows: &[(&str, &CostDistribution)]) -> String {
    let mut out = String::from("policy,cost,cdf\n");
    for (name, d) in rows {
        for (x, f) in &d.cdf {
            let _ = writeln!(out, "{name},{x},{f}");
        }
    }
    out
}

pub fn appliance_csv(solution: &DispatchSolution) -> String {
    let horizon = solution.p_g.len();
    let mut out = String::from("aggregator,user,appliance");
    for t in 0..horizon {
        let _ = write!(out, ",p_{t}");
    }
    out.push('\n');
    for a in &solution.appliances {
        let _ = write!(out, "{},{},{}", a.aggregator + 1, a.user + 1, a.appliance + 1);
        for v in &a.schedule {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{wecc6_case, wecc6_prices};

    #[test]
    fn case_round_trip() {
        let case = wecc6_case(3);
        let back: NetworkCase = from_json_str(&to_json_string(&case)).unwrap();
        assert_eq!(back, case);
        assert_eq!(case_digest(&back), case_digest(&case));
        let prices = wecc6_prices();
        let back: PriceSchedule = from_json_str(&to_json_string(&prices)).unwrap();
        assert_eq!(back, prices);
    }

    #[test]
    fn parse_error_names_the_field() {
        let err = from_json_str::<PriceSchedule>(r#"{"buy": [[1.0]], "sell": [["x"]]}"#).unwrap_err();
        assert!(err.contains("sell[0][0]"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn digest_differs_when_case_changes() {
        let a = wecc6_case(3);
        let mut b = a.clone();
        b.generators[0].cost_b += 1.0;
        assert_ne!(case_digest(&a), case_digest(&b));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_case(Path::new("/nonexistent/case.json")),
            Err(IoError::Io { .. })
        ));
    }

    #[test]
    fn matrix_csv_layout() {
        let csv = matrix_csv("bus", &vec![vec![1.0, 2.5], vec![3.0, 4.0]]);
        assert_eq!(csv, "slot,bus_1,bus_2\n0,1,2.5\n1,3,4\n");
    }
}
