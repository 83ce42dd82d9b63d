//! Artifact writing: HBGF grids, CSV tables and 8-bit PNG previews.
//!
//! File names are `<command>-<hash12>-<name>.<ext>` where the hash is taken
//! over the config, so reruns overwrite rather than accumulate and no clock
//! enters the name.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::Array2;

use crate::error::Error;
use crate::hbgf::{self, Dtype, Grid};

/// Display gamma applied to normalized intensities.
pub const GAMMA: f64 = 2.2;

#[derive(Debug, Clone, PartialEq)]
pub enum Preview {
    /// Linear intensity, max-normalized and gamma-mapped.
    Intensity(Array2<f64>),
    /// Phase in `[-π, π)` mapped linearly to `[0, 255]`.
    Phase(Array2<f64>),
    Rgb(Array2<[u8; 3]>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Grid {
        name: String,
        grid: Grid,
    },
    Table {
        name: String,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    },
    Png {
        name: String,
        preview: Preview,
    },
}

impl Artifact {
    pub fn grid(name: &str, grid: Grid) -> Self {
        Artifact::Grid {
            name: name.into(),
            grid,
        }
    }

    pub fn table(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Artifact::Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        }
    }

    pub fn png(name: &str, preview: Preview) -> Self {
        Artifact::Png {
            name: name.into(),
            preview,
        }
    }

    fn file_name(&self, stem: &str) -> String {
        match self {
            Artifact::Grid { name, .. } => format!("{stem}-{name}.hbgf"),
            Artifact::Table { name, .. } => format!("{stem}-{name}.csv"),
            Artifact::Png { name, .. } => format!("{stem}-{name}.png"),
        }
    }
}

/// Formats a float so that it parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Max-normalized, gamma-encoded 8-bit grayscale. An all-zero (or
/// non-positive) grid maps to black.
pub fn intensity_to_gray(data: &Array2<f64>) -> GrayImage {
    let max = data.iter().cloned().fold(0.0f64, f64::max);
    let (rows, cols) = data.dim();
    GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        let v = data[(y as usize, x as usize)];
        let level = if max > 0.0 && v > 0.0 {
            (v / max).min(1.0).powf(1.0 / GAMMA)
        } else {
            0.0
        };
        Luma([(level * 255.0).round() as u8])
    })
}

pub fn phase_to_gray(data: &Array2<f64>) -> GrayImage {
    let (rows, cols) = data.dim();
    GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        let v = data[(y as usize, x as usize)];
        let t = ((v + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0);
        Luma([(t * 255.0).round() as u8])
    })
}

fn rgb_image(data: &Array2<[u8; 3]>) -> RgbImage {
    let (rows, cols) = data.dim();
    RgbImage::from_fn(cols as u32, rows as u32, |x, y| {
        Rgb(data[(y as usize, x as usize)])
    })
}

fn write_one(path: &Path, artifact: &Artifact) -> Result<(), Error> {
    match artifact {
        Artifact::Grid { grid, .. } => {
            hbgf::write_file(path, grid, Dtype::F64).map_err(|source| Error::Hbgf {
                path: path.to_path_buf(),
                source,
            })
        }
        Artifact::Table { header, rows, .. } => {
            let csv_err = |e: csv::Error| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
            };
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        Artifact::Png { preview, .. } => {
            let result = match preview {
                Preview::Intensity(d) => intensity_to_gray(d).save(path),
                Preview::Phase(d) => phase_to_gray(d).save(path),
                Preview::Rgb(d) => rgb_image(d).save(path),
            };
            result.map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
    }
}

/// Writes every artifact into `dir` (created if needed). PNG previews are
/// skipped when `png` is false. On any failure the files already written by
/// this call are removed before the error is returned.
pub fn write_outputs(
    artifacts: &[Artifact],
    dir: &Path,
    stem: &str,
    png: bool,
) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for artifact in artifacts {
        if !png && matches!(artifact, Artifact::Png { .. }) {
            continue;
        }
        let path = dir.join(artifact.file_name(stem));
        if let Err(e) = write_one(&path, artifact) {
            let _ = fs::remove_file(&path);
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_render_black() {
        let img = intensity_to_gray(&Array2::zeros((4, 5)));
        assert_eq!(img.dimensions(), (5, 4));
        assert!(img.pixels().all(|p| p.0[0] == 0));
    }

    #[test]
    fn gamma_mapping() {
        let data = Array2::from_shape_vec((1, 3), vec![0.0, 0.25, 1.0]).unwrap();
        let img = intensity_to_gray(&data);
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
        let expected = (0.25f64.powf(1.0 / 2.2) * 255.0).round() as u8;
        assert_eq!(img.get_pixel(1, 0).0[0], expected);
        assert_eq!(img.get_pixel(2, 0).0[0], 255);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn writes_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Array2::from_shape_fn((3, 4), |(r, c)| r as f64 * 0.1 + c as f64);
        let artifacts = vec![
            Artifact::grid("map", Grid::Real(grid.clone())),
            Artifact::table("t", &["a", "b"], vec![vec!["1".into(), "x,y".into()]]),
            Artifact::png("map", Preview::Intensity(grid.clone())),
        ];
        let paths = write_outputs(&artifacts, dir.path(), "cmd-abc", true).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths[0].ends_with("cmd-abc-map.hbgf"));
        let back = hbgf::read_file(&paths[0]).unwrap().into_real().unwrap();
        assert_eq!(back, grid);
        let csv = fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(csv, "a,b\n1,\"x,y\"\n");
        let no_png = write_outputs(&artifacts, dir.path(), "cmd-def", false).unwrap();
        assert_eq!(no_png.len(), 2);
    }

    #[test]
    fn failure_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        // A directory squatting on the second file name makes that write fail.
        fs::create_dir(dir.path().join("s-b.csv")).unwrap();
        let artifacts = vec![
            Artifact::grid("a", Grid::Real(Array2::zeros((2, 2)))),
            Artifact::table("b", &["x"], vec![]),
        ];
        let err = write_outputs(&artifacts, dir.path(), "s", false).unwrap_err();
        assert_eq!(err.exit_code(), 20);
        assert!(!dir.path().join("s-a.hbgf").exists());
    }
}
