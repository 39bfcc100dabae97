//! Feature-sequence I/O, dataset manifests, and the synthetic planted-motif
//! benchmark generator.
//!
//! Binary feature format (`TAF1`): magic `TAF1`, then `T` and `D` as 32-bit
//! unsigned little-endian, then `T·D` little-endian IEEE 754 f32 values
//! row-major. Files with a `.csv` extension are parsed as one comma-separated
//! frame per line instead. Manifests are line-oriented:
//! `path<TAB>label<TAB>split` with split `train` or `test`.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};

use crate::error::{Result, TafError};
use crate::filterbank::FeatureSequence;
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::Prng;

pub const MAGIC: [u8; 4] = *b"TAF1";

/// Loads one feature file. On-disk payloads are f32; values are converted to
/// the requested scalar type (typically a widening to f64).
pub fn load_features<F: Real>(path: &Path) -> Result<FeatureSequence<F>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let data = if is_csv {
        load_csv(path)?
    } else {
        load_binary(path)?
    };
    if !data.is_finite() {
        return Err(TafError::format(path, "non-finite feature value"));
    }
    FeatureSequence::new(data, 0, path.display().to_string())
}

fn load_binary<F: Real>(path: &Path) -> Result<Matrix<F>> {
    let mut file = fs::File::open(path).map_err(|e| TafError::io(path, e))?;
    let mut header = [0u8; 12];
    file.read_exact(&mut header)
        .map_err(|_| TafError::format(path, "truncated header"))?;
    if header[0..4] != MAGIC {
        return Err(TafError::format(path, "bad magic, expected TAF1"));
    }
    let t = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if t == 0 || d == 0 {
        return Err(TafError::format(path, "zero-sized sequence"));
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)
        .map_err(|e| TafError::io(path, e))?;
    if payload.len() != t * d * 4 {
        return Err(TafError::format(
            path,
            format!(
                "truncated payload: expected {} bytes of floats, found {}",
                t * d * 4,
                payload.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(t * d);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        values.push(F::of(f64::from(v)));
    }
    Matrix::from_vec(t, d, values)
}

fn load_csv<F: Real>(path: &Path) -> Result<Matrix<F>> {
    let text = fs::read_to_string(path).map_err(|e| TafError::io(path, e))?;
    let mut rows: Vec<Vec<F>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| TafError::format(path, format!("bad number on line {}", n + 1)))?;
        rows.push(row.into_iter().map(F::of).collect());
    }
    if rows.is_empty() {
        return Err(TafError::format(path, "empty csv"));
    }
    Matrix::from_rows(&rows)
}

/// Writes one feature file, inverse of [`load_features`]; binary `TAF1`
/// unless the extension is `.csv`. The write is atomic: a temp file in the
/// same directory is renamed over the target.
pub fn write_features<F: Real>(path: &Path, x: &FeatureSequence<F>) -> Result<()> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut bytes = Vec::new();
    if is_csv {
        for r in 0..x.len() {
            let line: Vec<String> = x.data().row(r).iter().map(|v| v.dbl().to_string()).collect();
            bytes.extend_from_slice(line.join(",").as_bytes());
            bytes.push(b'\n');
        }
    } else {
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&(x.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(x.dim() as u32).to_le_bytes());
        for &v in x.data().data() {
            bytes.extend_from_slice(&(v.dbl() as f32).to_le_bytes());
        }
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| TafError::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| TafError::io(&tmp, e))?;
        f.sync_all().map_err(|e| TafError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| TafError::io(path, e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(TafError::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Parsed dataset manifest. Relative entry paths are resolved against the
/// manifest's directory.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub classes: usize,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| TafError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(p), Some(label), Some(split)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(TafError::format(
                path,
                format!("line {}: expected path<TAB>label<TAB>split", n + 1),
            ));
        };
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| TafError::format(path, format!("line {}: bad label", n + 1)))?;
        let split = Split::parse(split.trim())?;
        let mut file = PathBuf::from(p);
        if file.is_relative() {
            file = base.join(file);
        }
        if !file.exists() {
            return Err(TafError::format(
                path,
                format!("line {}: missing feature file {}", n + 1, file.display()),
            ));
        }
        entries.push(ManifestEntry {
            path: file,
            label,
            split,
        });
    }
    if entries.is_empty() {
        return Err(TafError::Dataset("manifest has no entries".into()));
    }
    if !entries.iter().any(|e| e.split == Split::Train) {
        return Err(TafError::Dataset("manifest has no train entries".into()));
    }
    let classes = entries.iter().map(|e| e.label).max().unwrap() + 1;
    Ok(Manifest { entries, classes })
}

/// A fully loaded dataset, features in memory, feature dimension validated to
/// be uniform.
#[derive(Clone, Debug)]
pub struct Dataset<F> {
    pub train: Vec<FeatureSequence<F>>,
    pub test: Vec<FeatureSequence<F>>,
    pub classes: usize,
    pub dim: usize,
}

pub fn load_dataset<F: Real>(manifest_path: &Path) -> Result<Dataset<F>> {
    let manifest = load_manifest(manifest_path)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dim = None;
    for entry in &manifest.entries {
        let seq = load_features::<F>(&entry.path)?.with_label(entry.label);
        match dim {
            None => dim = Some(seq.dim()),
            Some(d) if d != seq.dim() => {
                return Err(TafError::Dataset(format!(
                    "inconsistent feature dim: {} has {}, expected {d}",
                    entry.path.display(),
                    seq.dim()
                )));
            }
            _ => {}
        }
        match entry.split {
            Split::Train => train.push(seq),
            Split::Test => test.push(seq),
        }
    }
    Ok(Dataset {
        train,
        test,
        classes: manifest.classes,
        dim: dim.expect("manifest is non-empty"),
    })
}

/// Specification of the synthetic planted-motif benchmark.
///
/// Each class owns a fixed `motif_len × dim` pattern and a relative position
/// `p_c`. A sample is i.i.d. Gaussian background noise with the class motif
/// added at `p_c` (plus optional jitter), so classification requires reading
/// the right relative window — the planted positions are ground truth for
/// where attention should land.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub motif_len: usize,
    /// Per-class relative motif center, each in (0, 1).
    pub positions: Vec<f64>,
    /// Std of the Gaussian jitter added to the relative center per sample.
    pub jitter: f64,
    pub t_range: (usize, usize),
    pub noise_std: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// The default desk-scale benchmark: 5 classes, 16 dims, lengths 40..=80,
    /// 6-frame motifs, unit noise, 200 train / 100 test samples.
    pub fn default_benchmark(seed: u64) -> Self {
        let classes = 5;
        SynthSpec {
            classes,
            dim: 16,
            motif_len: 6,
            positions: Self::spread_positions(classes),
            jitter: 0.0,
            t_range: (40, 80),
            noise_std: 1.0,
            train_count: 200,
            test_count: 100,
            seed,
        }
    }

    /// Evenly spread class positions over [0.2, 0.8].
    pub fn spread_positions(classes: usize) -> Vec<f64> {
        if classes == 1 {
            return vec![0.5];
        }
        (0..classes)
            .map(|c| 0.2 + 0.6 * c as f64 / (classes - 1) as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 || self.motif_len == 0 {
            return Err(TafError::InvalidArgument(
                "classes, dim and motif_len must be positive".into(),
            ));
        }
        if self.positions.len() != self.classes {
            return Err(TafError::InvalidArgument(format!(
                "need {} positions, got {}",
                self.classes,
                self.positions.len()
            )));
        }
        if self.positions.iter().any(|&p| p <= 0.0 || p >= 1.0) {
            return Err(TafError::InvalidArgument(
                "positions must lie strictly inside (0, 1)".into(),
            ));
        }
        if self.t_range.0 > self.t_range.1 || self.t_range.0 == 0 {
            return Err(TafError::InvalidArgument("bad t_range".into()));
        }
        if self.motif_len >= self.t_range.0 {
            return Err(TafError::InvalidArgument(
                "motif_len must be shorter than the shortest sequence".into(),
            ));
        }
        if self.jitter < 0.0 || self.noise_std < 0.0 {
            return Err(TafError::InvalidArgument(
                "jitter and noise_std must be non-negative".into(),
            ));
        }
        if self.train_count == 0 {
            return Err(TafError::InvalidArgument("train_count must be positive".into()));
        }
        Ok(())
    }
}

/// Where one generated sample landed: its file, label, split, and the
/// realized relative motif center after jitter, clipping and rounding.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
    pub center_rel: f64,
}

/// Result of a generation run. `motifs` are the per-class patterns
/// (`motif_len × dim`, mean-centered across classes) for oracle use.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    pub positions_path: PathBuf,
    pub samples: Vec<SynthSample>,
    pub motifs: Vec<Matrix<f64>>,
}

/// Generates the benchmark into `out_dir`: feature files, `manifest.tsv`, and
/// `positions.tsv` (per-sample realized motif centers, one
/// `path<TAB>label<TAB>split<TAB>center` line each).
///
/// Deterministic for a fixed spec: one RNG stream seeded from `spec.seed`
/// drives motif creation, then every sample in (train, then test) order.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| TafError::io(out_dir, e))?;
    let mut rng = Prng::seed_from_u64(spec.seed);

    // Class motifs, drawn once. Most of each motif's per-dimension temporal
    // mean is removed so the global temporal average is nearly
    // class-uninformative (a small residual keeps coarse wide-filter reads
    // responsive); then motifs are mean-centered across classes so the
    // average motif is exactly zero.
    let mut motifs: Vec<Matrix<f64>> = (0..spec.classes)
        .map(|_| {
            let mut m = Matrix::zeros(spec.motif_len, spec.dim);
            for v in m.data_mut() {
                *v = standard_normal(&mut rng);
            }
            for d in 0..spec.dim {
                let col_mean =
                    (0..spec.motif_len).map(|r| m[(r, d)]).sum::<f64>() / spec.motif_len as f64;
                for r in 0..spec.motif_len {
                    m[(r, d)] -= 0.9 * col_mean;
                }
            }
            m
        })
        .collect();
    let scale = 1.0 / spec.classes as f64;
    let mean: Vec<f64> = (0..spec.motif_len * spec.dim)
        .map(|k| motifs.iter().map(|m| m.data()[k]).sum::<f64>() * scale)
        .collect();
    for m in &mut motifs {
        for (v, &mu) in m.data_mut().iter_mut().zip(&mean) {
            *v -= mu;
        }
    }

    let mut samples = Vec::with_capacity(spec.train_count + spec.test_count);
    for (split, count) in [(Split::Train, spec.train_count), (Split::Test, spec.test_count)] {
        for k in 0..count {
            let class = k % spec.classes;
            let t = rng.random_range(spec.t_range.0..=spec.t_range.1);
            let mut data = Matrix::zeros(t, spec.dim);
            if spec.noise_std > 0.0 {
                for v in data.data_mut() {
                    *v = spec.noise_std * standard_normal(&mut rng);
                }
            }
            let jittered = spec.positions[class] + spec.jitter * standard_normal(&mut rng);
            let p = jittered.clamp(0.0, 1.0);
            // Motif rows occupy [start, start + motif_len), clipped to fit.
            let half = (spec.motif_len - 1) as f64 / 2.0;
            let start = (p * (t - 1) as f64 - half).round() as i64;
            let start = start.clamp(0, (t - spec.motif_len) as i64) as usize;
            let motif = &motifs[class];
            for r in 0..spec.motif_len {
                for c in 0..spec.dim {
                    data[(start + r, c)] += motif[(r, c)];
                }
            }
            let center_rel = (start as f64 + half) / (t - 1) as f64;

            let name = format!("{}{:05}.taf", split.name(), k);
            let path = out_dir.join(&name);
            let seq = FeatureSequence::new(data, class, name.clone())?;
            write_features(&path, &seq)?;
            samples.push(SynthSample {
                path,
                label: class,
                split,
                center_rel,
            });
        }
    }

    let manifest_path = out_dir.join("manifest.tsv");
    let mut manifest = String::new();
    let mut positions = String::new();
    for s in &samples {
        let rel = s.path.file_name().unwrap().to_string_lossy();
        manifest.push_str(&format!("{rel}\t{}\t{}\n", s.label, s.split.name()));
        positions.push_str(&format!(
            "{rel}\t{}\t{}\t{}\n",
            s.label,
            s.split.name(),
            s.center_rel
        ));
    }
    fs::write(&manifest_path, manifest).map_err(|e| TafError::io(&manifest_path, e))?;
    let positions_path = out_dir.join("positions.tsv");
    fs::write(&positions_path, positions).map_err(|e| TafError::io(&positions_path, e))?;

    Ok(SynthOutput {
        manifest_path,
        positions_path,
        samples,
        motifs,
    })
}

/// Standard normal deviate via Box–Muller; two uniform draws per call.
pub fn standard_normal(rng: &mut Prng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
