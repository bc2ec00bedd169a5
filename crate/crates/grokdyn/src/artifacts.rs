//! On-disk formats: CSV tables, JSON reports and raw little-endian `f64`
//! matrices with a JSON sidecar.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use grokdyn_core::data::Dataset;
use grokdyn_core::fourier::{self, FourierFeatures};
use grokdyn_core::metrics::{MetricsLog, MetricsRow};
use grokdyn_core::net::Layout;
use grokdyn_core::probe::{ProbeRecord, ProbeStatus};
use grokdyn_core::toy::ToyTrajectory;
use grokdyn_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const METRICS_HEADER: [&str; 6] = ["step", "train_loss", "test_loss", "train_acc", "test_acc", "theta_norm"];
pub const PROBE_HEADER: [&str; 5] = ["step", "cos_sim", "proj_loss", "update_norm", "gtilde_norm"];

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, std::io::Error::other(e)))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// Writes `rows` under `header`; floats use Rust's shortest round-trip form
/// so reruns are byte-identical.
fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_metrics(path: &Path, log: &MetricsLog) -> CliResult<()> {
    write_csv(
        path,
        &METRICS_HEADER,
        log.rows.iter().map(|r| {
            vec![
                r.step.to_string(),
                num(r.train_loss),
                num(r.test_loss),
                num(r.train_acc),
                num(r.test_acc),
                num(r.theta_norm),
            ]
        }),
    )
}

fn parse_field<T: std::str::FromStr>(path: &Path, s: &str) -> CliResult<T> {
    s.parse()
        .map_err(|_| CliError::io(path, std::io::Error::other(format!("bad field {s:?}"))))
}

pub fn read_metrics(path: &Path) -> CliResult<MetricsLog> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut log = MetricsLog::default();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != METRICS_HEADER.len() {
            return Err(CliError::io(path, std::io::Error::other("wrong column count")));
        }
        log.rows.push(MetricsRow {
            step: parse_field(path, &rec[0])?,
            train_loss: parse_field(path, &rec[1])?,
            test_loss: parse_field(path, &rec[2])?,
            train_acc: parse_field(path, &rec[3])?,
            test_acc: parse_field(path, &rec[4])?,
            theta_norm: parse_field(path, &rec[5])?,
        });
    }
    Ok(log)
}

/// `probe.csv` plus `probe_warnings.csv` listing records whose projection
/// missed the tolerance or that failed outright.
pub fn write_probe(dir: &Path, records: &[ProbeRecord]) -> CliResult<()> {
    write_csv(
        &dir.join("probe.csv"),
        &PROBE_HEADER,
        records.iter().map(|r| {
            vec![
                r.step.to_string(),
                num(r.cos_sim),
                num(r.proj_loss),
                num(r.update_norm),
                num(r.gtilde_norm),
            ]
        }),
    )?;
    write_csv(
        &dir.join("probe_warnings.csv"),
        &["step", "status"],
        records.iter().filter_map(|r| {
            let status = match &r.status {
                ProbeStatus::Ok => return None,
                ProbeStatus::ProjectionAboveTolerance => "projection_above_tolerance".to_string(),
                ProbeStatus::Failed(e) => format!("failed: {e}"),
            };
            Some(vec![r.step.to_string(), status])
        }),
    )
}

/// Rows of `probe.csv` as `(step, cos_sim)`.
pub fn read_probe(path: &Path) -> CliResult<Vec<(usize, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            Ok((parse_field(path, &rec[0])?, parse_field(path, &rec[1])?))
        })
        .collect()
}

pub fn write_toy(path: &Path, traj: &ToyTrajectory, dim: usize) -> CliResult<()> {
    let mut header = vec!["step".to_string()];
    header.extend((1..=dim).map(|i| format!("w{i}")));
    header.extend(["train_loss".to_string(), "test_loss".to_string()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        traj.points.iter().map(|p| {
            let mut row = vec![p.step.to_string()];
            row.extend(p.theta.iter().map(|&v| num(v)));
            row.push(num(p.train_loss));
            row.push(p.test_loss.map(num).unwrap_or_default());
            row
        }),
    )
}

/// `a,b,c,split` with split one of `train`, `test`, `all`.
pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut label = vec!["all"; data.len()];
    if let Some(split) = data.split_info() {
        for &i in &split.train {
            label[i] = "train";
        }
        for &i in &split.test {
            label[i] = "test";
        }
    }
    write_csv(
        path,
        &["a", "b", "c", "split"],
        data.pairs().iter().zip(label).map(|(pair, l)| {
            vec![pair.a.to_string(), pair.b.to_string(), pair.c.to_string(), l.to_string()]
        }),
    )
}

/// Sidecar describing a `.bin` file of stacked row-major `f64` LE matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStack {
    pub dtype: String,
    pub order: String,
    pub rows: usize,
    pub cols: usize,
    /// Training step of each stacked matrix, in file order.
    pub steps: Vec<usize>,
    pub data: String,
}

/// Writes `stem.bin` and `stem.json`.
pub fn write_matrix_stack(dir: &Path, stem: &str, mats: &[(usize, Matrix)]) -> CliResult<()> {
    let (rows, cols) = mats.first().map_or((0, 0), |(_, m)| m.shape());
    let bin = dir.join(format!("{stem}.bin"));
    let file = fs::File::create(&bin).map_err(|e| CliError::io(&bin, e))?;
    let mut w = BufWriter::new(file);
    for (_, m) in mats {
        debug_assert_eq!(m.shape(), (rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                w.write_all(&m[(r, c)].to_le_bytes()).map_err(|e| CliError::io(&bin, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(&bin, e))?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &MatrixStack {
            dtype: "f64-le".into(),
            order: "row-major".into(),
            rows,
            cols,
            steps: mats.iter().map(|(s, _)| *s).collect(),
            data: format!("{stem}.bin"),
        },
    )
}

/// Reads every matrix of a stack given its `.json` sidecar (or `.bin`).
pub fn read_matrix_stack(path: &Path) -> CliResult<Vec<(usize, Matrix)>> {
    let meta_path: PathBuf = path.with_extension("json");
    let meta: MatrixStack = read_json(&meta_path)?;
    let bin = meta_path.with_file_name(&meta.data);
    let bytes = fs::read(&bin).map_err(|e| CliError::io(&bin, e))?;
    let per = meta.rows * meta.cols;
    if bytes.len() != 8 * per * meta.steps.len() {
        return Err(CliError::io(&bin, std::io::Error::other("size does not match sidecar")));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(meta
        .steps
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, Matrix::from_row_slice(meta.rows, meta.cols, &values[i * per..(i + 1) * per])))
        .collect())
}

/// Flat parameter vector as a one-row stack plus its layout.
pub fn write_params(dir: &Path, values: &[f64], layout: &Layout) -> CliResult<()> {
    let m = Matrix::from_row_slice(1, values.len(), values);
    write_matrix_stack(dir, "params", &[(0, m)])?;
    write_json(&dir.join("params_layout.json"), layout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub k: usize,
    pub norm_re: f64,
    pub norm_im: f64,
    pub aspect: f64,
    pub ortho: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierReport {
    pub p: usize,
    pub d_h: usize,
    pub step: usize,
    pub frequencies: Vec<FrequencyReport>,
    /// Frequencies by descending power.
    pub ranked: Vec<usize>,
    /// Similarity of `|[Re F_k; Im F_k]|` across frequencies.
    pub overlap: Vec<Vec<f64>>,
    pub overlap_re: Vec<Vec<f64>>,
    pub overlap_im: Vec<Vec<f64>>,
    /// Similarity of `|Re F_k|` with `|Im F_k|` per frequency.
    pub re_im: Vec<f64>,
    pub mean_off_diagonal: f64,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn fourier_report(ff: &FourierFeatures, step: usize) -> FourierReport {
    let overlap = fourier::frequency_overlap(ff);
    let parts = fourier::part_overlap(ff);
    FourierReport {
        p: ff.p,
        d_h: ff.mean.len(),
        step,
        frequencies: fourier::circle_metrics(ff)
            .into_iter()
            .zip(&ff.features)
            .map(|(m, f)| FrequencyReport {
                k: m.k,
                norm_re: m.norm_re,
                norm_im: m.norm_im,
                aspect: m.aspect,
                ortho: m.ortho,
                power: f.power(),
            })
            .collect(),
        ranked: ff.ranked_by_power().into_iter().map(|(k, _)| k).collect(),
        mean_off_diagonal: fourier::mean_off_diagonal(&overlap),
        overlap: rows_of(&overlap),
        overlap_re: rows_of(&parts.re),
        overlap_im: rows_of(&parts.im),
        re_im: parts.re_im,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.1 - 0.3);
        let b = &a * -2.0;
        write_matrix_stack(dir.path(), "emb", &[(0, a.clone()), (50, b.clone())]).unwrap();
        let back = read_matrix_stack(&dir.path().join("emb.json")).unwrap();
        assert_eq!(back, vec![(0, a), (50, b)]);
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = MetricsLog::default();
        for step in [0, 10] {
            log.push(MetricsRow {
                step,
                train_loss: 1.0 / 3.0,
                test_loss: 1e-300,
                train_acc: 1.0,
                test_acc: 0.25,
                theta_norm: 12.5,
            });
        }
        let path = dir.path().join("metrics.csv");
        write_metrics(&path, &log).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,train_loss,test_loss,train_acc,test_acc,theta_norm\n"));
        assert_eq!(read_metrics(&path).unwrap(), log);
    }

    #[test]
    fn truncated_stack_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        write_matrix_stack(dir.path(), "e", &[(0, Matrix::zeros(2, 2))]).unwrap();
        fs::write(dir.path().join("e.bin"), [0u8; 8]).unwrap();
        let err = read_matrix_stack(&dir.path().join("e.json")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
