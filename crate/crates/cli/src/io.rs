//! Input reading, CSV record schemas and output artifacts.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lasiq_core::lattice::{ChipState, FreqMap};

use crate::failure::{CliResult, Failure};
use crate::manifest::{sha256_hex, FileDigest};

/// Per-stage execution context. Relative paths resolve against `base`;
/// every file read is digested for the manifest.
pub struct Ctx {
    pub seed: u64,
    pub base: PathBuf,
    /// Resolved primary output; `None` writes to stdout.
    pub out: Option<PathBuf>,
    pub quiet: bool,
    read: RefCell<Vec<FileDigest>>,
}

impl Ctx {
    pub fn new(seed: u64, base: PathBuf, out: Option<PathBuf>, quiet: bool) -> Self {
        Ctx {
            seed,
            base,
            out,
            quiet,
            read: RefCell::new(Vec::new()),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    pub fn read_bytes(&self, p: &Path) -> CliResult<Vec<u8>> {
        let path = self.resolve(p);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Failure::missing(&path),
            _ => Failure::stage(anyhow::anyhow!("reading {}: {e}", path.display())),
        })?;
        let mut read = self.read.borrow_mut();
        if !read.iter().any(|d| d.path == path) {
            read.push(FileDigest {
                path,
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(bytes)
    }

    pub fn read_text(&self, p: &Path) -> CliResult<String> {
        let bytes = self.read_bytes(p)?;
        String::from_utf8(bytes).map_err(|_| {
            Failure::schema(anyhow::anyhow!(
                "{} is not UTF-8",
                self.resolve(p).display()
            ))
        })
    }

    pub fn read_json<T: DeserializeOwned>(&self, p: &Path) -> CliResult<T> {
        let text = self.read_text(p)?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::schema(anyhow::anyhow!("{}: {e}", self.resolve(p).display())))
    }

    pub fn read_chip(&self, p: &Path) -> CliResult<ChipState> {
        let text = self.read_text(p)?;
        Ok(ChipState::from_json_str(&text, &self.resolve(p))?)
    }

    pub fn read_csv<T: DeserializeOwned>(&self, p: &Path) -> CliResult<Vec<T>> {
        let bytes = self.read_bytes(p)?;
        let path = self.resolve(p);
        csv::Reader::from_reader(bytes.as_slice())
            .deserialize()
            .collect::<Result<Vec<T>, _>>()
            .map_err(|e| Failure::schema(anyhow::anyhow!("{}: {e}", path.display())))
    }

    pub fn inputs(&self) -> Vec<FileDigest> {
        self.read.borrow().clone()
    }

    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A result produced in memory; `path: None` goes to stdout.
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(path: Option<PathBuf>, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
        bytes.push(b'\n');
        Artifact { path, bytes }
    }

    /// `header` is written explicitly so an empty table still has one.
    pub fn csv<T: Serialize>(
        path: Option<PathBuf>,
        header: &[&str],
        rows: &[T],
    ) -> CliResult<Self> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(header).map_err(Failure::stage)?;
        for r in rows {
            w.serialize(r).map_err(Failure::stage)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Failure::stage(anyhow::anyhow!("{e}")))?;
        Ok(Artifact { path, bytes })
    }
}

/// Frequencies from any CSV with a `qubit_id` column and one of the
/// frequency columns below, in order of preference.
pub fn read_freqs(ctx: &Ctx, p: &Path) -> CliResult<FreqMap> {
    const COLUMNS: [&str; 3] = ["f_target_mhz", "f_mhz", "f01_mhz"];
    let rows: Vec<BTreeMap<String, String>> = ctx.read_csv(p)?;
    let path = ctx.resolve(p);
    let schema = |msg: String| Failure::schema(anyhow::anyhow!("{}: {msg}", path.display()));
    let Some(first) = rows.first() else {
        return Err(schema("no rows".into()));
    };
    let col = COLUMNS
        .iter()
        .find(|c| first.contains_key(**c))
        .ok_or_else(|| schema(format!("needs qubit_id and one of {COLUMNS:?}")))?;
    let mut out = FreqMap::new();
    for (i, row) in rows.iter().enumerate() {
        let field = |name: &str| {
            row.get(name)
                .ok_or_else(|| schema(format!("row {}: missing {name}", i + 1)))
        };
        let id: usize = field("qubit_id")?
            .trim()
            .parse()
            .map_err(|e| schema(format!("row {}: qubit_id: {e}", i + 1)))?;
        let f: f64 = field(col)?
            .trim()
            .parse()
            .map_err(|e| schema(format!("row {}: {col}: {e}", i + 1)))?;
        if out.insert(id, f).is_some() {
            return Err(schema(format!("qubit {id} listed twice")));
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ResidualRow {
    pub qubit_id: usize,
    pub residual_mhz: f64,
}

#[derive(Debug, Serialize)]
pub struct CollisionRow {
    pub control: usize,
    pub target: usize,
    #[serde(rename = "type")]
    pub kind: u8,
    pub margin_mhz: f64,
}

#[derive(Debug, Serialize)]
pub struct YieldRow {
    pub sigma_mhz: f64,
    #[serde(rename = "yield")]
    pub yield_frac: f64,
    pub ci: f64,
    pub mean_collisions: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanRow {
    pub qubit_id: usize,
    pub f_target_mhz: f64,
    pub r_target_ohm: f64,
    /// target − current, ≤ 0.
    pub df_mhz: f64,
    pub dr_rel: f64,
    pub status: String,
}

#[derive(Debug, Serialize)]
pub struct AnnealRow {
    pub qubit_id: usize,
    pub r0: f64,
    pub r_target: f64,
    pub r_final: Option<f64>,
    pub exposures: Option<u32>,
    pub status: String,
    pub dev_rel: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub detuning_mhz: f64,
    pub error: Option<f64>,
    pub zz_khz: f64,
    pub status: String,
}
