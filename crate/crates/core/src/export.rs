//! CSV and plot-file output, and the run manifest.
//!
//! Field files have a header row and one row per node and level with
//! columns `t, x[, y], value`, ordered by level and then by node index.
//! Numbers are written with Rust's shortest round-trip decimal form, so a
//! file read back reproduces the original values bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Bc, Field, Grid, SpaceTime};

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn coord_header(grid: &Grid) -> Vec<&'static str> {
    if grid.dim() == 1 {
        vec!["t", "x", "value"]
    } else {
        vec!["t", "x", "y", "value"]
    }
}

/// Space-time field in long format, every level included.
pub fn field_csv(grid: &Grid, st: &SpaceTime) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(coord_header(grid)).map_err(csv_error)?;
    for (n, level) in st.levels.iter().enumerate() {
        write_level(&mut w, grid, grid.time(n), level)?;
    }
    into_string(w)
}

/// A single time-independent field, written with `t = 0`.
pub fn static_field_csv(grid: &Grid, f: &Field) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(coord_header(grid)).map_err(csv_error)?;
    write_level(&mut w, grid, 0.0, f)?;
    into_string(w)
}

fn write_level(w: &mut csv::Writer<Vec<u8>>, grid: &Grid, t: f64, f: &Field) -> Result<()> {
    for (i, v) in f.values.iter().enumerate() {
        let x = grid.coords(f.bc, i);
        let mut row = vec![t.to_string(), x[0].to_string()];
        if grid.dim() == 2 {
            row.push(x[1].to_string());
        }
        row.push(v.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    Ok(())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Reads a field file for layout `bc`. A file with one row per node is
/// broadcast to every level; otherwise it must hold every level.
pub fn parse_field_csv(text: &str, grid: &Grid, bc: Bc) -> Result<SpaceTime> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?.clone();
    let expected = coord_header(grid);
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Shape(format!(
            "expected header {}",
            expected.join(",")
        )));
    }
    let ncoord = expected.len() - 1;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let nums = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| Error::Shape(format!("row {}: {e}", line + 1)))?;
        if nums.len() != ncoord + 1 {
            return Err(Error::Shape(format!(
                "row {}: expected {} columns",
                line + 1,
                ncoord + 1
            )));
        }
        rows.push(nums);
    }
    let nodes = grid.node_count(bc);
    let levels = grid.time_steps() + 1;
    let file_levels = if rows.len() == nodes {
        1
    } else if rows.len() == nodes * levels {
        levels
    } else {
        return Err(Error::Shape(format!(
            "{} rows; expected {nodes} (one level) or {} (all levels)",
            rows.len(),
            nodes * levels
        )));
    };
    let mut out = Vec::with_capacity(file_levels);
    for n in 0..file_levels {
        let mut values = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let row = &rows[n * nodes + i];
            let x = grid.coords(bc, i);
            let t_ok = file_levels == 1 || close(row[0], grid.time(n));
            if !t_ok || !close(row[1], x[0]) || (ncoord == 3 && !close(row[2], x[1])) {
                return Err(Error::Shape(format!(
                    "row {} does not match node {i} of level {n}",
                    n * nodes + i + 1
                )));
            }
            values.push(row[ncoord]);
        }
        out.push(Field { bc, values });
    }
    if file_levels == 1 {
        out = vec![out.remove(0); levels];
    }
    Ok(SpaceTime { levels: out })
}

/// Rows of any serializable record type, header from the field names.
pub fn records_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    into_string(w)
}

/// Gnuplot `nonuniform matrix` file of a 1D space-time field: the first row
/// holds the node count and the x coordinates, each further row the time
/// followed by the values at that level.
pub fn gnuplot_matrix(grid: &Grid, st: &SpaceTime) -> Result<String> {
    if grid.dim() != 1 {
        return Err(Error::Unsupported("matrix plot files are 1D only".into()));
    }
    let bc = st.bc();
    let nodes = grid.node_count(bc);
    let mut s = nodes.to_string();
    for i in 0..nodes {
        s.push(' ');
        s.push_str(&grid.coords(bc, i)[0].to_string());
    }
    s.push('\n');
    for (n, level) in st.levels.iter().enumerate() {
        s.push_str(&grid.time(n).to_string());
        for v in &level.values {
            s.push(' ');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run: the verbatim config, the seed and
/// the tool version, plus checksums of what was written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub status: String,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn new(mode: &str, seed: u64, config_text: &str) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config: config_text.to_string(),
            status: String::new(),
            artifacts: Vec::new(),
        }
    }
}

/// Writes artifacts into one directory and records them in the manifest.
#[derive(Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl OutputDir {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.manifest.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn finish(self, status: &str) -> Result<PathBuf> {
        let mut manifest = self.manifest;
        manifest.status = status.to_string();
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::interval(2.0, 5, 3, 0.3).unwrap()
    }

    #[test]
    fn zero_field_has_zero_values() {
        let g = grid();
        let csv = field_csv(&g, &SpaceTime::zeros(&g, Bc::Dirichlet)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,value");
        assert_eq!(lines.len(), 1 + 4 * 4);
        assert!(lines[1..].iter().all(|l| l.ends_with(",0")));
        assert_eq!(lines[1], "0,0.4,0");
    }

    #[test]
    fn round_trip_is_bitwise() {
        let g = grid();
        let chi = SpaceTime::from_fn(&g, Bc::Neumann, |t, x| {
            (1.0 / 3.0) * (t + x[0]).exp() - 1e-20
        });
        let back = parse_field_csv(&field_csv(&g, &chi).unwrap(), &g, Bc::Neumann).unwrap();
        assert_eq!(back, chi);

        let f = Field::from_fn(&g, Bc::Dirichlet, |x| x[0].sqrt());
        let back = parse_field_csv(&static_field_csv(&g, &f).unwrap(), &g, Bc::Dirichlet).unwrap();
        assert!(back.levels.iter().all(|l| *l == f));
    }

    #[test]
    fn plain_decimal_numbers() {
        let g = grid();
        let csv = field_csv(&g, &SpaceTime::constant(&g, Bc::Dirichlet, 1e-7)).unwrap();
        assert!(csv.lines().skip(1).all(|l| !l.contains('e')), "{csv}");
    }

    #[test]
    fn mismatched_files_are_rejected() {
        let g = grid();
        let csv = field_csv(&g, &SpaceTime::zeros(&g, Bc::Dirichlet)).unwrap();
        assert!(parse_field_csv(&csv, &g, Bc::Neumann).is_err());
        let other = Grid::interval(1.0, 5, 3, 0.3).unwrap();
        assert!(parse_field_csv(&csv, &other, Bc::Dirichlet).is_err());
        assert!(parse_field_csv("t,x,y,value\n", &g, Bc::Dirichlet).is_err());
    }

    #[test]
    fn gnuplot_matrix_shape() {
        let g = grid();
        let phi = SpaceTime::from_fn(&g, Bc::Neumann, |t, x| t * x[0]);
        let text = gnuplot_matrix(&g, &phi).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(' ').collect()).collect();
        assert_eq!(rows.len(), 1 + 4);
        assert!(rows.iter().all(|r| r.len() == 1 + 6));
        assert_eq!(rows[0][0], "6");
        assert_eq!(rows[2][0], g.time(1).to_string());
    }

    #[test]
    fn records_have_headers() {
        #[derive(Serialize)]
        struct Row {
            a: usize,
            b: f64,
        }
        let s = records_csv(&[Row { a: 1, b: 0.5 }, Row { a: 2, b: 0.25 }]).unwrap();
        assert_eq!(s, "a,b\n1,0.5\n2,0.25\n");
    }

    #[test]
    fn hashes_are_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
