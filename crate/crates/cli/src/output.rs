//! Artifact writers. Floats use Rust's shortest round-trip formatting.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use netac::{Mesh, TrajectorySet};
use serde::Serialize;

use crate::error::CliResult;

pub const TOOL_NAME: &str = "netac";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub scheme: String,
    pub trajectories: usize,
    pub files: Vec<String>,
}

/// Collects files written into one output directory and finishes with
/// `manifest.json`.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.root.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = BufWriter::new(File::create(self.root.join(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Snapshot table with columns `t, edge, x, value`; vertex values are
    /// repeated on every incident edge, edges are 1-based.
    pub fn snapshots(&mut self, name: &str, mesh: &Mesh, path: &TrajectorySet) -> CliResult<()> {
        let nodes = mesh.interior_nodes() + 2;
        let rows = path.times().iter().zip(path.states()).flat_map(|(&t, u)| {
            (0..mesh.graph().n_edges()).flat_map(move |j| {
                (0..nodes).map(move |l| vec![num(t), (j + 1).to_string(), num(mesh.node_x(l)), num(u[mesh.dof(j, l)])])
            })
        });
        self.csv(name, &["t", "edge", "x", "value"], rows)
    }

    pub fn finish(mut self, manifest: impl FnOnce(Vec<String>) -> Manifest) -> CliResult<PathBuf> {
        let files = std::mem::take(&mut self.files);
        let m = manifest(files);
        self.json("manifest.json", &m)?;
        Ok(self.root)
    }
}
