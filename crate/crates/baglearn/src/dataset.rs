//! Labeled dataset container and its text interchange format.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::BagLearnError;

/// A regression dataset: features `X` (n×d), noisy labels `y`, and, when the
/// generating model is known, the noiseless labels `ỹ = Xθ*` and `θ*` itself.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub expected_labels: Option<Array1<f64>>,
    pub theta_star: Option<Array1<f64>>,
    pub noise_sigma: f64,
}

impl Dataset {
    /// Validates dimensions and, when both `θ*` and `ỹ` are present, that
    /// `ỹ = Xθ*` to within 1e-12 relative.
    pub fn new(
        features: Array2<f64>,
        labels: Array1<f64>,
        expected_labels: Option<Array1<f64>>,
        theta_star: Option<Array1<f64>>,
        noise_sigma: f64,
    ) -> Result<Self, BagLearnError> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(BagLearnError::param("dataset must have n ≥ 1 and d ≥ 1"));
        }
        if labels.len() != n {
            return Err(BagLearnError::dim(format!(
                "{} labels for {n} instances",
                labels.len()
            )));
        }
        if let Some(ey) = &expected_labels {
            if ey.len() != n {
                return Err(BagLearnError::dim(format!(
                    "{} expected labels for {n} instances",
                    ey.len()
                )));
            }
        }
        if let Some(ts) = &theta_star {
            if ts.len() != d {
                return Err(BagLearnError::dim(format!(
                    "theta_star has {} entries for {d} features",
                    ts.len()
                )));
            }
        }
        if noise_sigma < 0.0 {
            return Err(BagLearnError::param("noise_sigma must be nonnegative"));
        }
        if let (Some(ey), Some(ts)) = (&expected_labels, &theta_star) {
            let predicted = features.dot(ts);
            let scale = ey.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            for (i, (&a, &b)) in ey.iter().zip(predicted.iter()).enumerate() {
                if (a - b).abs() > 1e-12 * scale {
                    return Err(BagLearnError::param(format!(
                        "expected_labels[{i}] = {a} but features·theta_star = {b}"
                    )));
                }
            }
        }
        Ok(Dataset {
            features,
            labels,
            expected_labels,
            theta_star,
            noise_sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Writes the dataset as text: `#`-prefixed metadata, a header row, then
    /// one instance per line (d feature values, y, and ỹ when present).
    /// Floats use the shortest representation that round-trips, so a written
    /// and re-read dataset is bit-identical.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<(), BagLearnError> {
        writeln!(out, "# noise_sigma {}", self.noise_sigma)?;
        if let Some(ts) = &self.theta_star {
            let joined: Vec<String> = ts.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "# theta_star {}", joined.join(" "))?;
        }
        let mut header: Vec<String> = (0..self.d()).map(|j| format!("x{j}")).collect();
        header.push("y".to_string());
        if self.expected_labels.is_some() {
            header.push("ytilde".to_string());
        }
        writeln!(out, "{}", header.join(" "))?;
        for i in 0..self.n() {
            let mut fields: Vec<String> =
                self.features.row(i).iter().map(|v| format!("{v}")).collect();
            fields.push(format!("{}", self.labels[i]));
            if let Some(ey) = &self.expected_labels {
                fields.push(format!("{}", ey[i]));
            }
            writeln!(out, "{}", fields.join(" "))?;
        }
        Ok(())
    }

    /// Parses the format written by [`Dataset::write`]. Unrecognized metadata
    /// lines are ignored so callers may annotate files freely.
    pub fn read<R: BufRead>(input: R) -> Result<Self, BagLearnError> {
        let mut noise_sigma = 0.0f64;
        let mut theta_star: Option<Array1<f64>> = None;
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(meta) = trimmed.strip_prefix('#') {
                let mut parts = meta.split_whitespace();
                match parts.next() {
                    Some("noise_sigma") => {
                        noise_sigma = parse_f64(parts.next().unwrap_or(""), lineno)?;
                    }
                    Some("theta_star") => {
                        let vals: Result<Vec<f64>, _> =
                            parts.map(|p| parse_f64(p, lineno)).collect();
                        theta_star = Some(Array1::from_vec(vals?));
                    }
                    _ => {}
                }
                continue;
            }
            if header.is_none() {
                header = Some(trimmed.split_whitespace().map(str::to_string).collect());
                continue;
            }
            let vals: Result<Vec<f64>, _> = trimmed
                .split_whitespace()
                .map(|p| parse_f64(p, lineno))
                .collect();
            rows.push(vals?);
        }
        let header = header.ok_or(BagLearnError::Parse {
            line: 0,
            context: "missing header row".to_string(),
        })?;
        let has_ytilde = header.last().map(String::as_str) == Some("ytilde");
        let cols = header.len();
        let d = cols - 1 - usize::from(has_ytilde);
        if d == 0 {
            return Err(BagLearnError::Parse {
                line: 1,
                context: "header has no feature columns".to_string(),
            });
        }
        let n = rows.len();
        let mut features = Array2::zeros((n, d));
        let mut labels = Array1::zeros(n);
        let mut expected = if has_ytilde {
            Some(Array1::zeros(n))
        } else {
            None
        };
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(BagLearnError::Parse {
                    line: i + 1,
                    context: format!("expected {cols} fields, found {}", row.len()),
                });
            }
            for j in 0..d {
                features[[i, j]] = row[j];
            }
            labels[i] = row[d];
            if let Some(ey) = &mut expected {
                ey[i] = row[d + 1];
            }
        }
        Dataset::new(features, labels, expected, theta_star, noise_sigma)
    }

    pub fn save(&self, path: &Path) -> Result<(), BagLearnError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut file)
    }

    pub fn load(path: &Path) -> Result<Self, BagLearnError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Dataset::read(file)
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, BagLearnError> {
    s.parse().map_err(|_| BagLearnError::Parse {
        line,
        context: format!("expected a number, found {s:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> Dataset {
        let x = array![[1.0, 0.5], [0.25, -1.0], [2.0, 0.125]];
        let ts = array![0.75, -0.5];
        let ey = x.dot(&ts);
        let y = &ey + &array![0.1, -0.2, 0.05];
        Dataset::new(x, y, Some(ey), Some(ts), 0.5).unwrap()
    }

    #[test]
    fn round_trips_bit_identically() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = Dataset::read(&buf[..]).unwrap();
        assert_eq!(ds.features, back.features);
        assert_eq!(ds.labels, back.labels);
        assert_eq!(ds.expected_labels, back.expected_labels);
        assert_eq!(ds.theta_star, back.theta_star);
        assert_eq!(ds.noise_sigma, back.noise_sigma);

        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn round_trips_without_optional_fields() {
        let ds = Dataset::new(
            array![[1.0], [2.0]],
            array![0.5, 1.5],
            None,
            None,
            0.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = Dataset::read(&buf[..]).unwrap();
        assert_eq!(back.expected_labels, None);
        assert_eq!(back.theta_star, None);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn ignores_unknown_metadata() {
        let text = "# family isotropic\nx0 y\n1.0 2.0\n";
        let ds = Dataset::read(text.as_bytes()).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.labels[0], 2.0);
    }

    #[test]
    fn rejects_inconsistent_expected_labels() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let ts = array![1.0, 1.0];
        let wrong = array![1.0, 2.0];
        let err = Dataset::new(x, array![1.0, 1.0], Some(wrong), Some(ts), 0.0);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "x0 x1 y\n1.0 2.0 3.0\n1.0 2.0\n";
        assert!(Dataset::read(text.as_bytes()).is_err());
    }
}
