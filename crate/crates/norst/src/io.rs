//! File formats: a small binary container for matrices (bulk replay), CSV
//! for per-frame metrics (plotting with external tools), and scenario
//! bundles combining both.
//!
//! Binary container layout, little-endian throughout:
//! magic `NRST` (4 bytes), version u32, rows u64, cols u64, then
//! rows x cols f64 values in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{NorstError, Result};
use crate::metrics::MetricsReport;
use crate::scenario::{Scenario, ScenarioConfig};

const MAGIC: &[u8; 4] = b"NRST";
const VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> NorstError {
    NorstError::io(path.display().to_string(), source)
}

/// Writes a matrix in the binary container format.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    emit(MAGIC)?;
    emit(&VERSION.to_le_bytes())?;
    emit(&(m.nrows() as u64).to_le_bytes())?;
    emit(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            emit(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a matrix written by [`write_matrix`]. Truncated or malformed files
/// report the offending row.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 4 + 4 + 8 + 8];
    r.read_exact(&mut header).map_err(|_| NorstError::Parse {
        path: path.display().to_string(),
        row: 0,
        message: "header shorter than 24 bytes".into(),
    })?;
    if &header[0..4] != MAGIC {
        return Err(NorstError::Parse {
            path: path.display().to_string(),
            row: 0,
            message: format!("bad magic {:?}", &header[0..4]),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(NorstError::Parse {
            path: path.display().to_string(),
            row: 0,
            message: format!("unsupported version {version}"),
        });
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
    let mut m = DMatrix::zeros(rows, cols);
    let mut buf = vec![0u8; cols * 8];
    for i in 0..rows {
        r.read_exact(&mut buf).map_err(|_| NorstError::Parse {
            path: path.display().to_string(),
            row: i + 1,
            message: format!("truncated at data row {}", i + 1),
        })?;
        for j in 0..cols {
            m[(i, j)] = f64::from_le_bytes(buf[j * 8..(j + 1) * 8].try_into().expect("8 bytes"));
        }
    }
    Ok(m)
}

/// Writes per-frame supports: one line per frame, `t,i1 i2 i3 ...`.
pub fn write_supports(path: &Path, start_t: usize, supports: &[Vec<usize>]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,indices").map_err(|e| io_err(path, e))?;
    for (offset, sup) in supports.iter().enumerate() {
        let joined = sup
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(w, "{},{}", start_t + offset, joined).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_supports(path: &Path) -> Result<Vec<(usize, Vec<usize>)>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if idx == 0 {
            if line.trim() != "t,indices" {
                return Err(NorstError::Parse {
                    path: path.display().to_string(),
                    row: 1,
                    message: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| NorstError::Parse {
            path: path.display().to_string(),
            row: idx + 1,
            message: msg,
        };
        let (t_str, rest) = line
            .split_once(',')
            .ok_or_else(|| parse("missing comma".into()))?;
        let t: usize = t_str
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad frame index: {e}")))?;
        let mut indices = Vec::new();
        for tok in rest.split_whitespace() {
            indices.push(
                tok.parse::<usize>()
                    .map_err(|e| parse(format!("bad support index {tok:?}: {e}")))?,
            );
        }
        out.push((t, indices));
    }
    Ok(out)
}

pub const METRICS_HEADER: &str =
    "t,sin_theta,rel_err_l,support_precision,support_recall,detected_epoch";

/// Writes the per-frame metrics CSV.
pub fn write_metrics_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{METRICS_HEADER}").map_err(|e| io_err(path, e))?;
    for f in &report.frames {
        let epoch = f
            .detected_epoch
            .map(|e| e.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.6},{:.6},{}",
            f.t, f.sin_theta, f.rel_err_l, f.support_precision, f.support_recall, epoch
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One parsed metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub sin_theta: f64,
    pub rel_err_l: f64,
    pub support_precision: f64,
    pub support_recall: f64,
    pub detected_epoch: Option<usize>,
}

/// Parses and schema-checks a metrics CSV.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let parse = |msg: String| NorstError::Parse {
            path: path.display().to_string(),
            row: idx + 1,
            message: msg,
        };
        if idx == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(parse(format!("unexpected metrics header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse(format!("expected 6 columns, got {}", fields.len())));
        }
        let num = |s: &str, name: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse(format!("bad {name} {s:?}: {e}")))
        };
        rows.push(MetricsRow {
            t: fields[0]
                .trim()
                .parse()
                .map_err(|e| parse(format!("bad t: {e}")))?,
            sin_theta: num(fields[1], "sin_theta")?,
            rel_err_l: num(fields[2], "rel_err_l")?,
            support_precision: num(fields[3], "support_precision")?,
            support_recall: num(fields[4], "support_recall")?,
            detected_epoch: {
                let s = fields[5].trim();
                if s.is_empty() {
                    None
                } else {
                    Some(s.parse().map_err(|e| parse(format!("bad epoch: {e}")))?)
                }
            },
        });
    }
    Ok(rows)
}

/// Paths of a scenario bundle inside its directory.
pub struct ScenarioBundle {
    pub dir: PathBuf,
}

impl ScenarioBundle {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ScenarioBundle { dir: dir.into() }
    }

    fn meta(&self) -> PathBuf {
        self.dir.join("scenario.toml")
    }

    fn observations(&self) -> PathBuf {
        self.dir.join("observations.nrst")
    }

    fn low_rank(&self) -> PathBuf {
        self.dir.join("low_rank.nrst")
    }

    fn supports(&self) -> PathBuf {
        self.dir.join("supports.csv")
    }

    fn subspace(&self, j: usize) -> PathBuf {
        self.dir.join(format!("subspace_{j}.nrst"))
    }

    fn noise(&self) -> PathBuf {
        self.dir.join("noise.nrst")
    }

    /// Serializes the full scenario for replay.
    pub fn save(&self, scenario: &Scenario) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let meta = BundleMeta {
            seed: scenario.seed,
            epochs: scenario.subspaces.len(),
            change_magnitudes: scenario.change_magnitudes.clone(),
            config: scenario.config.clone(),
        };
        let text = toml::to_string_pretty(&meta)
            .map_err(|e| NorstError::Config(format!("meta serialization: {e}")))?;
        std::fs::write(self.meta(), text).map_err(|e| io_err(&self.meta(), e))?;
        write_matrix(&self.observations(), &scenario.observations)?;
        write_matrix(&self.low_rank(), &scenario.low_rank)?;
        write_supports(&self.supports(), 0, &scenario.supports)?;
        for (j, p) in scenario.subspaces.iter().enumerate() {
            write_matrix(&self.subspace(j), p.cols())?;
        }
        if let Some(noise) = &scenario.noise {
            write_matrix(&self.noise(), noise)?;
        }
        Ok(())
    }

    /// Loads a bundle saved by [`ScenarioBundle::save`]. Outlier values are
    /// reconstructed from `Y - L - V` on the stored supports, so the loaded
    /// scenario replays bit-identically.
    pub fn load(&self) -> Result<Scenario> {
        let text =
            std::fs::read_to_string(self.meta()).map_err(|e| io_err(&self.meta(), e))?;
        let meta: BundleMeta = toml::from_str(&text)
            .map_err(|e| NorstError::Config(format!("scenario.toml: {e}")))?;
        let observations = read_matrix(&self.observations())?;
        let low_rank = read_matrix(&self.low_rank())?;
        let supports_rows = read_supports(&self.supports())?;
        let mut supports = vec![Vec::new(); meta.config.d];
        for (t, sup) in supports_rows {
            if t >= meta.config.d {
                return Err(NorstError::Parse {
                    path: self.supports().display().to_string(),
                    row: t + 2,
                    message: format!("frame {t} outside d = {}", meta.config.d),
                });
            }
            supports[t] = sup;
        }
        let noise = if self.noise().exists() {
            Some(read_matrix(&self.noise())?)
        } else {
            None
        };
        let mut subspaces = Vec::with_capacity(meta.epochs);
        for j in 0..meta.epochs {
            let cols = read_matrix(&self.subspace(j))?;
            subspaces.push(crate::geometry::Basis::from_orthonormal(cols)?);
        }
        let mut outlier_values = Vec::with_capacity(meta.config.d);
        for t in 0..meta.config.d {
            let vals = supports[t]
                .iter()
                .map(|&i| {
                    let v = noise.as_ref().map_or(0.0, |m| m[(i, t)]);
                    observations[(i, t)] - low_rank[(i, t)] - v
                })
                .collect();
            outlier_values.push(vals);
        }
        Ok(Scenario {
            config: meta.config,
            seed: meta.seed,
            subspaces,
            change_magnitudes: meta.change_magnitudes,
            observations,
            low_rank,
            noise,
            supports,
            outlier_values,
        })
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct BundleMeta {
    seed: u64,
    epochs: usize,
    change_magnitudes: Vec<f64>,
    config: ScenarioConfig,
}

/// Writes a gnuplot-ready whitespace-separated data file: one row per
/// record, columns as given.
pub fn write_dat(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {}", header.join(" ")).map_err(|e| io_err(path, e))?;
    for row in rows {
        let line = row
            .iter()
            .map(|v| format!("{v:.12e}"))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{gen_scenario, MagnitudeMode, RotationSpec, SupportModel};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn matrix_roundtrip_bitwise() {
        let dir = tmpdir();
        let path = dir.path().join("m.nrst");
        let m = DMatrix::from_fn(7, 5, |i, j| (i as f64 * 1.7 + j as f64 * 0.3).sin() * 1e3);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn truncated_matrix_reports_row() {
        let dir = tmpdir();
        let path = dir.path().join("m.nrst");
        let m = DMatrix::from_fn(6, 4, |i, j| (i + j) as f64);
        write_matrix(&path, &m).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 12]).unwrap();
        match read_matrix(&path) {
            Err(NorstError::Parse { row, .. }) => assert_eq!(row, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn scenario_bundle_roundtrip() {
        let cfg = ScenarioConfig {
            n: 24,
            d: 60,
            r: 2,
            f: 9.0,
            t_train: 10,
            change_times: vec![30],
            rotation: RotationSpec::TargetSinTheta { target: 0.05 },
            support_train: SupportModel::Bernoulli { rho: 0.02 },
            support_post: SupportModel::Bernoulli { rho: 0.05 },
            alpha: 10,
            x_min: 8.0,
            x_max: 12.0,
            magnitude_mode: MagnitudeMode::Uniform,
            noise: None,
        };
        let scenario = gen_scenario(&cfg, 77).unwrap();
        let dir = tmpdir();
        let bundle = ScenarioBundle::new(dir.path().join("sc"));
        bundle.save(&scenario).unwrap();
        let back = bundle.load().unwrap();
        assert_eq!(back.observations, scenario.observations);
        assert_eq!(back.low_rank, scenario.low_rank);
        assert_eq!(back.supports, scenario.supports);
        assert_eq!(back.seed, scenario.seed);
        assert_eq!(back.subspaces.len(), scenario.subspaces.len());
        for t in 0..cfg.d {
            assert_eq!(back.x_col(t), scenario.x_col(t), "frame {t}");
        }
    }

    #[test]
    fn supports_parse_error_names_row() {
        let dir = tmpdir();
        let path = dir.path().join("sup.csv");
        std::fs::write(&path, "t,indices\n0,1 2\nbroken-line\n").unwrap();
        match read_supports(&path) {
            Err(NorstError::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
