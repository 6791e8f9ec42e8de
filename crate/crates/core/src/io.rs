//! Dataset files, the synthetic multi-view generator and tensor debug files.
//!
//! A dataset is a JSON manifest next to one CSV per view. A view file has
//! `d_v` lines of `N` comma-separated numbers, so column `j` is sample `j`.
//! The optional labels file has `N` lines holding 1-based cluster indices.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::MultiViewDataset;
use crate::tensor::{Matrix, Tensor3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// View CSV paths, relative to the manifest's directory unless absolute.
    pub views: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub clusters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    /// Name of a known dataset whose default `lambda` applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if m.views.is_empty() {
            return Err(Error::Dataset(format!("{}: manifest lists no views", path.display())));
        }
        if let Some(names) = &m.names {
            if names.len() != m.views.len() {
                return Err(Error::Dataset(format!(
                    "{}: {} names for {} views",
                    path.display(),
                    names.len(),
                    m.views.len()
                )));
            }
        }
        if let Some(p) = &m.preset {
            p.parse::<Preset>()?;
        }
        Ok(m)
    }

    pub fn preset(&self) -> Result<Option<Preset>> {
        self.preset.as_deref().map(str::parse).transpose()
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a numeric CSV into a matrix, one file line per matrix row. Blank
/// lines are skipped.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, tok)| {
                let tok = tok.trim();
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(parse_error(path, lineno, format!("field {}: not a finite number: {tok:?}", col + 1))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_error(
                    path,
                    lineno,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, "file holds no data"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

fn format_row(out: &mut String, values: impl Iterator<Item = f64>) {
    for (i, v) in values.enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").expect("write to string");
    }
    out.push('\n');
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        format_row(&mut out, row.iter().copied());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads one integer label per line, each in `1..=clusters` when a cluster
/// count is given, and returns them 0-based.
pub fn read_labels(path: &Path, clusters: Option<usize>) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v: usize = tok
            .parse()
            .map_err(|_| parse_error(path, idx + 1, format!("not a positive integer label: {tok:?}")))?;
        let max = clusters.unwrap_or(usize::MAX);
        if v == 0 || v > max {
            return Err(parse_error(path, idx + 1, format!("label {v} outside 1..={max}")));
        }
        labels.push(v - 1);
    }
    if labels.is_empty() {
        return Err(parse_error(path, 1, "file holds no labels"));
    }
    Ok(labels)
}

/// Writes 0-based labels as 1-based lines.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        writeln!(out, "{}", l + 1).expect("write to string");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads the dataset a manifest describes.
pub fn load_dataset(manifest_path: &Path) -> Result<MultiViewDataset> {
    let m = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut views = Vec::with_capacity(m.views.len());
    let mut first: Option<(PathBuf, usize)> = None;
    for p in &m.views {
        let path = resolve(base, p);
        let x = read_matrix_csv(&path)?;
        match &first {
            None => first = Some((path, x.ncols())),
            Some((fp, n)) if *n != x.ncols() => {
                return Err(Error::Dataset(format!(
                    "{} has {} samples but {} has {n}",
                    path.display(),
                    x.ncols(),
                    fp.display()
                )));
            }
            _ => {}
        }
        views.push(x);
    }
    let labels = match &m.labels {
        Some(p) => {
            let path = resolve(base, p);
            let l = read_labels(&path, Some(m.clusters))?;
            let n = views[0].ncols();
            if l.len() != n {
                return Err(Error::Dataset(format!("{} has {} labels for {n} samples", path.display(), l.len())));
            }
            Some(l)
        }
        None => None,
    };
    MultiViewDataset::new(views, labels, m.clusters)
}

/// Writes `view1.csv`, ..., `labels.csv` (when present) and `manifest.json`
/// into `dir`, creating it if needed. Returns the manifest path.
pub fn save_dataset(data: &MultiViewDataset, dir: &Path, preset: Option<Preset>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut views = Vec::new();
    for (v, x) in data.views().iter().enumerate() {
        let name = PathBuf::from(format!("view{}.csv", v + 1));
        write_matrix_csv(&dir.join(&name), x)?;
        views.push(name);
    }
    let labels = match data.labels() {
        Some(l) => {
            let name = PathBuf::from("labels.csv");
            write_labels(&dir.join(&name), l)?;
            Some(name)
        }
        None => None,
    };
    let manifest = Manifest {
        views,
        labels,
        clusters: data.clusters(),
        names: None,
        preset: preset.map(|p| p.name().to_string()),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub clusters: usize,
    pub per_cluster: usize,
    /// Ambient dimension of each view; its length is the number of views.
    pub dims: Vec<usize>,
    pub rank: usize,
    pub noise: f64,
    /// 0-based view whose columns get replaced by noise.
    pub corrupt_view: Option<usize>,
    pub corrupt_frac: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(clusters: usize, per_cluster: usize, dims: Vec<usize>, rank: usize, noise: f64, seed: u64) -> Self {
        Self {
            clusters,
            per_cluster,
            dims,
            rank,
            noise,
            corrupt_view: None,
            corrupt_frac: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dims.is_empty() {
            return bad("at least one view dimension is required".into());
        }
        if self.clusters == 0 || self.per_cluster == 0 {
            return bad("clusters and per-cluster count must be positive".into());
        }
        let min_dim = *self.dims.iter().min().expect("nonempty");
        if self.rank == 0 || self.rank > min_dim {
            return bad(format!("rank must lie in 1..={min_dim}, got {}", self.rank));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.corrupt_frac) {
            return bad(format!("corruption fraction must lie in [0, 1], got {}", self.corrupt_frac));
        }
        if let Some(v) = self.corrupt_view {
            if v >= self.dims.len() {
                return bad(format!("corrupted view {} out of range 1..={}", v + 1, self.dims.len()));
            }
        }
        Ok(())
    }
}

fn orthonormal_basis(rng: &mut ChaCha8Rng, d: usize, r: usize) -> Matrix {
    let g = Matrix::from_fn(d, r, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// Union-of-subspaces data: every cluster of every view lives on its own random
/// `rank`-dimensional subspace, plus isotropic Gaussian noise. Samples are
/// grouped by cluster, and all views share the assignment.
///
/// Corrupted columns are replaced by Gaussian vectors whose expected norm
/// matches that of a clean sample.
pub fn synth(cfg: &SynthConfig) -> Result<MultiViewDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (k, m, r) = (cfg.clusters, cfg.per_cluster, cfg.rank);
    let n = k * m;
    let labels: Vec<usize> = (0..n).map(|i| i / m).collect();
    let mut views = Vec::with_capacity(cfg.dims.len());
    for &d in &cfg.dims {
        let mut x = Matrix::zeros(d, n);
        for c in 0..k {
            let basis = orthonormal_basis(&mut rng, d, r);
            let coeffs = Matrix::from_fn(r, m, |_, _| StandardNormal.sample(&mut rng));
            let noise = Matrix::from_fn(d, m, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.noise * z
            });
            x.columns_mut(c * m, m).copy_from(&(&basis * coeffs + noise));
        }
        views.push(x);
    }
    if let Some(v) = cfg.corrupt_view {
        let count = (cfg.corrupt_frac * n as f64).round() as usize;
        let d = cfg.dims[v];
        let dist = Normal::new(0.0, (r as f64 / d as f64).sqrt()).expect("valid deviation");
        for col in sample(&mut rng, n, count).into_iter() {
            for i in 0..d {
                views[v][(i, col)] = dist.sample(&mut rng);
            }
        }
    }
    MultiViewDataset::new(views, Some(labels), k)
}

/// Reads a tensor debug file: three header lines `n1`, `n2`, `n3`, then the
/// frontal slices in order, each as `n1` lines of `n2` values.
pub fn read_tensor_csv(path: &Path) -> Result<Tensor3> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut dims = [0usize; 3];
    for (slot, name) in dims.iter_mut().zip(["n1", "n2", "n3"]) {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| parse_error(path, 1, format!("missing {name} header")))?;
        *slot = line
            .trim()
            .parse()
            .ok()
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| parse_error(path, idx + 1, format!("{name} must be a positive integer")))?;
    }
    let [n1, n2, n3] = dims;
    let mut t = Tensor3::zeros(n1, n2, n3);
    for k in 0..n3 {
        for i in 0..n1 {
            let (idx, line) = lines.next().ok_or_else(|| {
                parse_error(path, text.lines().count(), format!("expected {} data lines", n1 * n3))
            })?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n2 {
                return Err(parse_error(path, idx + 1, format!("expected {n2} fields, found {}", fields.len())));
            }
            for (j, tok) in fields.into_iter().enumerate() {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| parse_error(path, idx + 1, format!("field {}: not a finite number", j + 1)))?;
                t.set(i, j, k, v);
            }
        }
    }
    if let Some((idx, _)) = lines.next() {
        return Err(parse_error(path, idx + 1, "trailing data after the last slice"));
    }
    Ok(t)
}

pub fn write_tensor_csv(path: &Path, t: &Tensor3) -> Result<()> {
    let (n1, n2, n3) = t.dims();
    let mut out = format!("{n1}\n{n2}\n{n3}\n");
    for k in 0..n3 {
        for i in 0..n1 {
            format_row(&mut out, (0..n2).map(|j| t.get(i, j, k)));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Known benchmark datasets and their tuned `lambda`. Features must be
/// supplied by the user; none ship with this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Yale,
    ExtendedYaleB,
    Orl,
    NottingHill,
    Scene15,
    MitIndoor67,
    Coil20,
    Caltech101,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Yale,
        Preset::ExtendedYaleB,
        Preset::Orl,
        Preset::NottingHill,
        Preset::Scene15,
        Preset::MitIndoor67,
        Preset::Coil20,
        Preset::Caltech101,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Yale => "yale",
            Preset::ExtendedYaleB => "extended-yaleb",
            Preset::Orl => "orl",
            Preset::NottingHill => "notting-hill",
            Preset::Scene15 => "scene-15",
            Preset::MitIndoor67 => "mitindoor-67",
            Preset::Coil20 => "coil-20",
            Preset::Caltech101 => "caltech-101",
        }
    }

    pub fn lambda(self) -> f64 {
        match self {
            Preset::Yale => 1.1,
            Preset::ExtendedYaleB => 1.3,
            Preset::Orl => 0.2,
            Preset::NottingHill => 0.1,
            Preset::Scene15 => 1.5,
            Preset::MitIndoor67 => 0.2,
            Preset::Coil20 => 0.25,
            Preset::Caltech101 => 0.5,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name().replace('-', "") == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::InvalidArgument(format!("unknown preset {s:?}, expected one of {}", names.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::testutil::random_tensor;
    use crate::tensor::testutil::rng;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn toy_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let x1 = Matrix::from_row_slice(2, 3, &[1.0, -2.5, 3.25, 0.1, 1e-17, 7.0]);
        let x2 = Matrix::from_row_slice(1, 3, &[std::f64::consts::PI, 2.0, -0.0]);
        let data = MultiViewDataset::new(vec![x1, x2], Some(vec![0, 1, 1]), 2).unwrap();
        let path = save_dataset(&data, dir.path(), None).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
    }

    #[test]
    fn synthetic_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth(&SynthConfig::new(3, 5, vec![6, 8], 2, 0.01, 4)).unwrap();
        let path = save_dataset(&data, dir.path(), Some(Preset::Orl)).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
        assert_eq!(Manifest::read(&path).unwrap().preset().unwrap(), Some(Preset::Orl));
    }

    #[test]
    fn mismatched_sample_counts_name_both_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2,3\n");
        write(dir.path(), "b.csv", "1,2\n");
        let m = write(dir.path(), "m.json", r#"{"views":["a.csv","b.csv"],"clusters":2}"#);
        let msg = load_dataset(&m).unwrap_err().to_string();
        assert!(msg.contains("a.csv") && msg.contains("b.csv"), "{msg}");
    }

    #[test]
    fn parse_errors_carry_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = write(dir.path(), "r.csv", "1,2\n\n3\n");
        match read_matrix_csv(&ragged).unwrap_err() {
            Error::Parse { path, line, .. } => assert_eq!((path, line), (ragged, 3)),
            e => panic!("{e}"),
        }
        let word = write(dir.path(), "w.csv", "1,2\n3,abc\n");
        assert!(matches!(read_matrix_csv(&word), Err(Error::Parse { line: 2, .. })));
        let nan = write(dir.path(), "n.csv", "NaN\n");
        assert!(matches!(read_matrix_csv(&nan), Err(Error::Parse { line: 1, .. })));
        let labels = write(dir.path(), "l.csv", "1\n2\n3\n");
        assert!(matches!(read_labels(&labels, Some(2)), Err(Error::Parse { line: 3, .. })));
        let zero = write(dir.path(), "z.csv", "0\n");
        assert!(matches!(read_labels(&zero, None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_matrix_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn label_count_must_match_samples() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,2,3\n");
        write(dir.path(), "l.csv", "1\n2\n");
        let m = write(dir.path(), "m.json", r#"{"views":["a.csv"],"labels":"l.csv","clusters":2}"#);
        assert!(matches!(load_dataset(&m), Err(Error::Dataset(_))));
    }

    #[test]
    fn manifest_rejects_bad_presets_and_empty_views() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.json", r#"{"views":["a.csv"],"clusters":2,"preset":"nope"}"#);
        assert!(Manifest::read(&m).is_err());
        let m = write(dir.path(), "e.json", r#"{"views":[],"clusters":2}"#);
        assert!(Manifest::read(&m).is_err());
        let m = write(dir.path(), "j.json", "{\n\"views\": [\n");
        assert!(matches!(Manifest::read(&m), Err(Error::Parse { .. })));
    }

    #[test]
    fn presets_parse_loosely() {
        assert_eq!("ExtendedYaleB".parse::<Preset>().unwrap(), Preset::ExtendedYaleB);
        assert_eq!("coil20".parse::<Preset>().unwrap(), Preset::Coil20);
        assert_eq!("MITIndoor-67".parse::<Preset>().unwrap().lambda(), 0.2);
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn noiseless_rank_one_clusters_lie_on_lines() {
        let data = synth(&SynthConfig::new(2, 6, vec![5, 7], 1, 0.0, 9)).unwrap();
        for x in data.views() {
            for c in 0..2 {
                let block = x.columns(c * 6, 6).into_owned();
                let s = block.singular_values();
                assert!(s[1] <= 1e-12 * s[0]);
            }
            assert!(x.rank(1e-10) == 2);
        }
    }

    #[test]
    fn synth_is_seeded() {
        let cfg = SynthConfig::new(3, 4, vec![5], 2, 0.1, 77);
        assert_eq!(synth(&cfg).unwrap(), synth(&cfg).unwrap());
        let other = SynthConfig { seed: 78, ..cfg.clone() };
        assert_ne!(synth(&cfg).unwrap(), synth(&other).unwrap());
    }

    #[test]
    fn corruption_replaces_the_requested_share_of_columns() {
        let clean = SynthConfig::new(2, 10, vec![6, 6], 2, 0.0, 5);
        let corrupted = SynthConfig {
            corrupt_view: Some(1),
            corrupt_frac: 0.3,
            ..clean.clone()
        };
        let (a, b) = (synth(&clean).unwrap(), synth(&corrupted).unwrap());
        assert_eq!(a.view(0), b.view(0));
        let changed = (0..20).filter(|&j| a.view(1).column(j) != b.view(1).column(j)).count();
        assert_eq!(changed, 6);
    }

    #[test]
    fn synth_validation() {
        let base = SynthConfig::new(2, 3, vec![4, 5], 2, 0.0, 0);
        assert!(synth(&SynthConfig { rank: 5, ..base.clone() }).is_err());
        assert!(synth(&SynthConfig { corrupt_frac: 1.5, ..base.clone() }).is_err());
        assert!(synth(&SynthConfig {
            corrupt_view: Some(2),
            ..base.clone()
        })
        .is_err());
        assert!(synth(&SynthConfig { dims: vec![], ..base }).is_err());
    }

    #[test]
    fn tensor_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let t = random_tensor(&mut rng(80), 3, 2, 4);
        let p = dir.path().join("t.csv");
        write_tensor_csv(&p, &t).unwrap();
        assert_eq!(read_tensor_csv(&p).unwrap(), t);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("3\n2\n4\n"));
        assert_eq!(text.lines().count(), 3 + 3 * 4);
    }

    #[test]
    fn tensor_csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let short = write(dir.path(), "s.csv", "2\n1\n1\n1.0\n");
        assert!(matches!(read_tensor_csv(&short), Err(Error::Parse { .. })));
        let long = write(dir.path(), "l.csv", "1\n1\n1\n1.0\n2.0\n");
        assert!(matches!(read_tensor_csv(&long), Err(Error::Parse { line: 5, .. })));
        let header = write(dir.path(), "h.csv", "1\nx\n1\n1.0\n");
        assert!(matches!(read_tensor_csv(&header), Err(Error::Parse { line: 2, .. })));
    }
}
