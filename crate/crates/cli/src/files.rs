//! Point lists, volume directories and mesh export.

use std::fmt::Write as _;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use atriamap_core::eval::LabeledGrid;
use atriamap_core::volume::load_volume;
use atriamap_core::{PointCloud, TriangleMesh};

/// Reads one point per line as three numbers separated by whitespace or
/// commas. Blank lines and `#` comments are skipped.
pub fn read_points(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading points {}", path.display()))?;
    parse_points(&text).with_context(|| format!("in points file {}", path.display()))
}

pub fn parse_points(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let [x, y, z] = fields.as_slice() else {
            bail!("line {}: expected 3 coordinates, got {}", n + 1, fields.len());
        };
        let parse = |s: &str| s.parse::<f64>().with_context(|| format!("line {}: bad coordinate {s:?}", n + 1));
        points.push([parse(x)?, parse(y)?, parse(z)?]);
    }
    Ok(PointCloud::new(points)?)
}

pub fn format_points(cloud: &PointCloud) -> String {
    let mut out = String::from("# x y z\n");
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    out
}

/// Volume files (`*.avx`) in `dir`, sorted by name.
pub fn volume_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "avx") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        bail!("no .avx volumes in {}", dir.display());
    }
    Ok(paths)
}

/// Loads volumes, using each file stem as the id.
pub fn load_labeled(paths: &[PathBuf]) -> Result<Vec<LabeledGrid>> {
    paths
        .iter()
        .map(|p| {
            let grid = load_volume(p).with_context(|| format!("loading {}", p.display()))?;
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(LabeledGrid { id, grid })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Stl,
}

impl MeshFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Obj => "obj",
            Self::Stl => "stl",
        }
    }
}

impl crate::config::ConfigValue for MeshFormat {
    fn parse_value(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    match format {
        MeshFormat::Obj => mesh.write_obj(&mut out),
        MeshFormat::Stl => mesh.write_stl(&mut out),
    }
    .with_context(|| format!("writing {}", path.display()))?;
    std::io::Write::flush(&mut out)?;
    Ok(())
}
