//! Star-shaped benchmark with one dominant component and four sparse
//! outlier components, plus JSON Lines dataset I/O.
//!
//! Dataset files hold one JSON document per line. The first line is a
//! metadata record `{"meta": {...}}` carrying at least `dim`; every
//! following line is one observation `{"label": 3, "points": [[x, y], ...]}`
//! (`label` optional, `"points": []` for the empty pattern).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{check_dim, Error, Result};
use crate::rfs::{sample_poisson_rfs, GaussianParams, PointPattern, PoissonRfsParams};

/// Mixture of Poisson RFS components used as ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarConfig {
    /// Number of observations (sets), not points.
    pub num_observations: usize,
    pub component_weights: Vec<f64>,
    pub component_rates: Vec<f64>,
    pub component_means: Vec<Vec<f64>>,
    pub component_covariances: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
}

/// Offset `c` of the outlier components at `(±c, ±c)`.
pub const DEFAULT_CORNER_OFFSET: f64 = 10.0;
/// Per-coordinate variance of the dominant centre component. Wide enough
/// that the corners sit about two standard deviations out, where pooled
/// points alone give little evidence of separate clusters.
pub const DEFAULT_CENTER_VARIANCE: f64 = 49.0;
/// Observations (sets). Each corner then holds roughly 60 non-empty sets,
/// enough to pin its rate down despite the many empty patterns whose
/// cluster membership is decided by cardinality alone.
pub const DEFAULT_NUM_OBSERVATIONS: usize = 800;
pub const DEFAULT_CENTER_RATE: f64 = 100.0;
pub const DEFAULT_OUTLIER_RATE: f64 = 0.5;

impl Default for StarConfig {
    fn default() -> Self {
        Self::star(DEFAULT_CORNER_OFFSET, DEFAULT_CENTER_VARIANCE, DEFAULT_NUM_OBSERVATIONS, 0)
    }
}

impl StarConfig {
    /// Five equally weighted 2-D components: the centre at the origin with
    /// rate 100 and covariance `center_variance · I`, four unit-covariance
    /// corners at `(±offset, ±offset)` with rate 0.5.
    pub fn star(corner_offset: f64, center_variance: f64, num_observations: usize, seed: u64) -> Self {
        let c = corner_offset;
        let diag = |v: f64| vec![vec![v, 0.0], vec![0.0, v]];
        Self {
            num_observations,
            component_weights: vec![0.2; 5],
            component_rates: vec![
                DEFAULT_CENTER_RATE,
                DEFAULT_OUTLIER_RATE,
                DEFAULT_OUTLIER_RATE,
                DEFAULT_OUTLIER_RATE,
                DEFAULT_OUTLIER_RATE,
            ],
            component_means: vec![
                vec![0.0, 0.0],
                vec![c, c],
                vec![-c, c],
                vec![-c, -c],
                vec![c, -c],
            ],
            component_covariances: vec![diag(center_variance), diag(1.0), diag(1.0), diag(1.0), diag(1.0)],
            seed,
        }
    }

    pub fn num_components(&self) -> usize {
        self.component_weights.len()
    }

    pub fn dim(&self) -> usize {
        self.component_means.first().map_or(0, Vec::len)
    }

    /// Checks the config and builds the per-component RFS parameters.
    pub fn components(&self) -> Result<Vec<PoissonRfsParams>> {
        let k = self.num_components();
        if k == 0 {
            return Err(Error::Param("at least one component is required".into()));
        }
        for (name, len) in [
            ("rates", self.component_rates.len()),
            ("means", self.component_means.len()),
            ("covariances", self.component_covariances.len()),
        ] {
            if len != k {
                return Err(Error::Param(format!("{len} component {name} for {k} weights")));
            }
        }
        if self.component_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Param("component weights must be nonnegative".into()));
        }
        let total: f64 = self.component_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!("component weights sum to {total}, not 1")));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::Param("component means must have dimension at least 1".into()));
        }
        self.component_rates
            .iter()
            .zip(&self.component_means)
            .zip(&self.component_covariances)
            .map(|((&rate, mean), cov)| {
                check_dim(dim, mean.len())?;
                check_dim(dim, cov.len())?;
                let mut flat = Vec::with_capacity(dim * dim);
                for row in cov {
                    check_dim(dim, row.len())?;
                    flat.extend_from_slice(row);
                }
                let gaussian = GaussianParams::new(
                    DVector::from_column_slice(mean),
                    DMatrix::from_row_slice(dim, dim, &flat),
                )?;
                PoissonRfsParams::new(rate, gaussian)
            })
            .collect()
    }
}

/// Draws `num_observations` patterns: a component by weight, then a
/// pattern from that component's Poisson RFS. Returns the patterns and
/// the generating component of each.
pub fn generate_star(config: &StarConfig) -> Result<(Vec<PointPattern>, Vec<usize>)> {
    let components = config.components()?;
    let chooser = WeightedIndex::new(&config.component_weights)
        .map_err(|e| Error::Param(format!("component weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = Vec::with_capacity(config.num_observations);
    let mut labels = Vec::with_capacity(config.num_observations);
    for _ in 0..config.num_observations {
        let label = chooser.sample(&mut rng);
        data.push(sample_poisson_rfs(&components[label], &mut rng));
        labels.push(label);
    }
    Ok((data, labels))
}

/// Contents of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: Map<String, Value>,
    pub dim: usize,
    pub patterns: Vec<PointPattern>,
    /// Present only when every record carries a label.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Generator config embedded in the metadata, if there is one.
    pub fn star_config(&self) -> Option<StarConfig> {
        self.meta
            .get("config")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    points: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct MetaLine {
    meta: Map<String, Value>,
}

pub fn write_dataset(
    path: impl AsRef<Path>,
    meta: &Map<String, Value>,
    patterns: &[PointPattern],
    labels: Option<&[usize]>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset_to(&mut out, meta, patterns, labels)?;
    out.flush()?;
    Ok(())
}

/// Writes the metadata line (with `dim` filled in) and one record per
/// pattern.
pub fn write_dataset_to<W: Write>(
    out: &mut W,
    meta: &Map<String, Value>,
    patterns: &[PointPattern],
    labels: Option<&[usize]>,
) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != patterns.len() {
            return Err(Error::Input(format!(
                "{} labels for {} patterns",
                labels.len(),
                patterns.len()
            )));
        }
    }
    let dim = match (patterns.first(), meta.get("dim").and_then(Value::as_u64)) {
        (Some(p), _) => p.dim(),
        (None, Some(d)) => d as usize,
        (None, None) => return Err(Error::Input("cannot infer the dimension of an empty dataset".into())),
    };
    let mut meta = meta.clone();
    meta.insert("dim".into(), Value::from(dim));
    let mut header = Map::new();
    header.insert("meta".into(), Value::Object(meta));
    serde_json::to_writer(&mut *out, &header).map_err(json_io)?;
    out.write_all(b"\n")?;
    for (i, p) in patterns.iter().enumerate() {
        check_dim(dim, p.dim())?;
        let record = Record {
            label: labels.map(|l| l[i]),
            points: p.to_vecs(),
        };
        serde_json::to_writer(&mut *out, &record).map_err(json_io)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset_from(BufReader::new(File::open(path)?))
}

pub fn read_dataset_from<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut meta = None;
    let mut dim: Option<usize> = None;
    let mut patterns = Vec::new();
    let mut labels = Vec::new();
    let mut labelled = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if meta.is_none() && patterns.is_empty() && line.trim_start().starts_with("{\"meta\"") {
            let m: MetaLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            if let Some(d) = m.meta.get("dim") {
                let d = d
                    .as_u64()
                    .filter(|&d| d >= 1)
                    .ok_or_else(|| parse_err(format!("invalid dim {d}")))?;
                dim = Some(d as usize);
            }
            meta = Some(m.meta);
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let record_dim = record.points.first().map(Vec::len);
        let d = match (dim, record_dim) {
            (Some(d), _) => d,
            (None, Some(d)) => {
                dim = Some(d);
                d
            }
            (None, None) => {
                return Err(parse_err(
                    "empty pattern before the dimension is known; add \"dim\" to the meta record".into(),
                ))
            }
        };
        let pattern = PointPattern::new(d, &record.points).map_err(|e| parse_err(e.to_string()))?;
        if let Some(l) = record.label {
            labelled += 1;
            labels.push(l);
        }
        patterns.push(pattern);
    }
    let labels = match labelled {
        0 => None,
        n if n == patterns.len() => Some(labels),
        n => {
            return Err(Error::Parse {
                line: 0,
                message: format!("{n} of {} records carry a label", patterns.len()),
            })
        }
    };
    let dim = dim.ok_or_else(|| Error::Parse {
        line: 0,
        message: "dataset has no records and no dimension".into(),
    })?;
    Ok(Dataset {
        meta: meta.unwrap_or_default(),
        dim,
        patterns,
        labels,
    })
}

fn json_io(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
