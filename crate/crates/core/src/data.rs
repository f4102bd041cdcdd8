//! Datasets: Lorenz-attractor denoising windows, a synthetic heteroscedastic
//! sine, tabular CSV ingestion and input corruption for shift experiments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LikaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// Inputs, targets, optional generator-known noise scale and a split tag per
/// row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub true_sigma: Option<Array2<f64>>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn new(
        inputs: Array2<f64>,
        targets: Array2<f64>,
        true_sigma: Option<Array2<f64>>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = inputs.nrows();
        if n == 0 {
            return Err(LikaError::Data("dataset has no rows".into()));
        }
        if targets.nrows() != n || split.len() != n {
            return Err(LikaError::Data(format!(
                "row count mismatch: inputs {n}, targets {}, split tags {}",
                targets.nrows(),
                split.len()
            )));
        }
        if let Some(s) = &true_sigma {
            if s.dim() != targets.dim() {
                return Err(LikaError::Data("true_sigma shape differs from targets".into()));
            }
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(LikaError::Data("dataset contains non-finite values".into()));
        }
        Ok(Dataset {
            inputs,
            targets,
            true_sigma,
            split,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows of one split as a standalone dataset (tags preserved).
    pub fn subset(&self, split: Split) -> Dataset {
        let idx = self.indices(split);
        Dataset {
            inputs: self.inputs.select(Axis(0), &idx),
            targets: self.targets.select(Axis(0), &idx),
            true_sigma: self.true_sigma.as_ref().map(|s| s.select(Axis(0), &idx)),
            split: vec![split; idx.len()],
        }
    }

    /// Per-column (mean, population std) of the inputs over one split.
    pub fn input_stats(&self, split: Split) -> Vec<(f64, f64)> {
        column_stats(&self.inputs.select(Axis(0), &self.indices(split)))
    }
}

pub(crate) fn column_stats(m: &Array2<f64>) -> Vec<(f64, f64)> {
    let n = m.nrows() as f64;
    m.columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// 70/15/15 split of `n` rows in a seeded random order.
pub fn random_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 70 / 100;
    let n_val = n * 15 / 100;
    let mut split = vec![Split::Test; n];
    for (rank, &row) in order.iter().enumerate() {
        split[row] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    split
}

/// Right-hand side of the Lorenz system with σ = 10, ρ = 28, β = 8/3.
pub fn lorenz_rhs(z: [f64; 3]) -> [f64; 3] {
    [
        10.0 * (z[1] - z[0]),
        z[0] * (28.0 - z[2]) - z[1],
        z[0] * z[1] - 8.0 * z[2] / 3.0,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct LorenzConfig {
    pub integration_step: f64,
    pub sample_step: f64,
    pub noise_sigma: f64,
    /// Number of sampled points on the trajectory.
    pub n_samples: usize,
    /// Simulated time discarded before sampling starts.
    pub burn_in: f64,
    /// Noisy samples per input window; the target is the clean sample at
    /// the window centre.
    pub window: usize,
    pub seed: u64,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        LorenzConfig {
            integration_step: 1e-5,
            sample_step: 0.05,
            noise_sigma: 0.5,
            n_samples: 3000,
            burn_in: 10.0,
            window: 9,
            seed: 0,
        }
    }
}

impl LorenzConfig {
    fn substeps(&self) -> Result<usize> {
        if !(self.integration_step > 0.0 && self.integration_step < self.sample_step) {
            return Err(LikaError::Usage(
                "lorenz: need 0 < integration_step < sample_step".into(),
            ));
        }
        if self.window == 0 {
            return Err(LikaError::Usage("lorenz: window must be >= 1".into()));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 || self.burn_in.is_nan() || self.burn_in < 0.0 {
            return Err(LikaError::Usage("lorenz: negative noise or burn-in".into()));
        }
        Ok((self.sample_step / self.integration_step).round() as usize)
    }
}

/// Clean and noisy samples of one trajectory.
#[derive(Clone, Debug)]
pub struct LorenzTrajectory {
    pub clean: Vec<[f64; 3]>,
    pub noisy: Vec<[f64; 3]>,
}

fn euler(z: &mut [f64; 3], dt: f64, steps: usize) -> Result<()> {
    for _ in 0..steps {
        let d = lorenz_rhs(*z);
        for k in 0..3 {
            z[k] += dt * d[k];
        }
    }
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LikaError::numeric("lorenz integration left the finite range"))
    }
}

/// Forward-Euler integration from a perturbed (1, 1, 1), sampled every
/// `sample_step` after the burn-in, with i.i.d. Gaussian observation noise.
pub fn lorenz_trajectory(cfg: &LorenzConfig) -> Result<LorenzTrajectory> {
    let substeps = cfg.substeps()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = [1.0, 1.0, 1.0];
    for v in z.iter_mut() {
        *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    let burn_steps = (cfg.burn_in / cfg.integration_step).round() as usize;
    euler(&mut z, cfg.integration_step, burn_steps)?;

    let mut clean = Vec::with_capacity(cfg.n_samples);
    let mut noisy = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        if i > 0 {
            euler(&mut z, cfg.integration_step, substeps)?;
        }
        clean.push(z);
        let mut zn = z;
        for v in zn.iter_mut() {
            *v += cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        noisy.push(zn);
    }
    Ok(LorenzTrajectory { clean, noisy })
}

/// Denoising windows cut from one trajectory. Splits are chronological
/// 70/15/15 blocks of the sampled points; windows never straddle a block
/// boundary.
pub fn generate_lorenz(cfg: &LorenzConfig) -> Result<Dataset> {
    let traj = lorenz_trajectory(cfg)?;
    let n = traj.clean.len();
    let w = cfg.window;
    let left = w / 2;
    let bounds = [
        (Split::Train, 0, n * 70 / 100),
        (Split::Val, n * 70 / 100, n * 85 / 100),
        (Split::Test, n * 85 / 100, n),
    ];

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut split = Vec::new();
    for (tag, start, end) in bounds {
        if end < start + w {
            continue;
        }
        for first in start..=(end - w) {
            for p in &traj.noisy[first..first + w] {
                inputs.extend_from_slice(p);
            }
            targets.extend_from_slice(&traj.clean[first + left]);
            split.push(tag);
        }
    }
    let rows = split.len();
    if rows == 0 {
        return Err(LikaError::Usage("lorenz: trajectory too short for the window".into()));
    }
    let inputs = Array2::from_shape_vec((rows, 3 * w), inputs).expect("window shape");
    let targets = Array2::from_shape_vec((rows, 3), targets).expect("target shape");
    let sigma = Array2::from_elem((rows, 3), cfg.noise_sigma);
    Dataset::new(inputs, targets, Some(sigma), split)
}

/// Noise scale of the synthetic task: 0.1 at x = 0 rising to 0.9 at |x| = 2.
pub fn synthetic_sigma(x: f64) -> f64 {
    0.1 + 0.4 * x.abs()
}

/// `y = sin(2x) + ε`, `ε ~ N(0, σ(x)²)`, `x ~ U[−2, 2]`, random 70/15/15 splits.
pub fn generate_synthetic(n: usize, seed: u64) -> Result<Dataset> {
    generate_synthetic_scaled(n, seed, 1.0)
}

/// [`generate_synthetic`] with the noise scale multiplied by `noise_scale`.
pub fn generate_synthetic_scaled(n: usize, seed: u64, noise_scale: f64) -> Result<Dataset> {
    if n < 10 {
        return Err(LikaError::Usage(format!("synthetic dataset needs n >= 10, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut ss = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-2.0..=2.0);
        let s = noise_scale * synthetic_sigma(x);
        let eps: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push((2.0 * x).sin() + s * eps);
        ss.push(s);
    }
    let split = random_splits(n, seed.wrapping_add(0x5eed));
    Dataset::new(
        Array2::from_shape_vec((n, 1), xs).expect("shape"),
        Array2::from_shape_vec((n, 1), ys).expect("shape"),
        Some(Array2::from_shape_vec((n, 1), ss).expect("shape")),
        split,
    )
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| LikaError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| LikaError::Data(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| LikaError::Data(format!("{}: {e}", path.display())))?;
        if rec.len() != header.len() {
            return Err(LikaError::Data(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                r + 1,
                rec.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                LikaError::Data(format!(
                    "{}: non-numeric cell {cell:?} at row {}, column {} ({})",
                    path.display(),
                    r + 1,
                    c + 1,
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(LikaError::Data(format!(
                    "{}: non-finite cell at row {}, column {} ({})",
                    path.display(),
                    r + 1,
                    c + 1,
                    header[c]
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LikaError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(RawTable { header, rows })
}

fn gather(rows: &[Vec<f64>], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| rows[i][cols[j]])
}

/// Reads a headered numeric CSV. The named columns become targets, every
/// other column an input. Splits are a seeded 70/15/15 shuffle; with
/// `normalize`, inputs are z-scored with train-split statistics.
pub fn load_csv(path: &Path, target_columns: &[String], normalize: bool, seed: u64) -> Result<Dataset> {
    let table = read_table(path)?;
    let mut target_idx = Vec::with_capacity(target_columns.len());
    for name in target_columns {
        let i = table.header.iter().position(|h| h == name).ok_or_else(|| {
            LikaError::Data(format!("{}: target column {name:?} not found", path.display()))
        })?;
        target_idx.push(i);
    }
    if target_idx.is_empty() {
        return Err(LikaError::Usage("at least one target column is required".into()));
    }
    let input_idx: Vec<usize> = (0..table.header.len())
        .filter(|i| !target_idx.contains(i))
        .collect();
    let mut inputs = gather(&table.rows, &input_idx);
    let targets = gather(&table.rows, &target_idx);
    let split = random_splits(table.rows.len(), seed);
    if normalize {
        let ds = Dataset::new(inputs.clone(), targets.clone(), None, split.clone())?;
        let stats = ds.input_stats(Split::Train);
        for (mut col, &(mean, std)) in inputs.columns_mut().into_iter().zip(&stats) {
            let std = if std > 0.0 { std } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    Dataset::new(inputs, targets, None, split)
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

/// Sidecar path holding the split manifest of a dataset CSV.
pub fn split_manifest_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().unwrap_or_default().to_os_string();
    name.push(".splits.json");
    csv_path.with_file_name(name)
}

/// Writes `x0..,y0..[,s0..]` CSV plus the JSON split sidecar.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut header: Vec<String> = (0..ds.input_dim()).map(|i| format!("x{i}")).collect();
    header.extend((0..ds.output_dim()).map(|i| format!("y{i}")));
    if ds.true_sigma.is_some() {
        header.extend((0..ds.output_dim()).map(|i| format!("s{i}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..ds.n_rows() {
        let mut cells: Vec<String> = ds.inputs.row(i).iter().map(|v| v.to_string()).collect();
        cells.extend(ds.targets.row(i).iter().map(|v| v.to_string()));
        if let Some(s) = &ds.true_sigma {
            cells.extend(s.row(i).iter().map(|v| v.to_string()));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let write_err = |e: std::io::Error| LikaError::Data(format!("cannot write {}: {e}", path.display()));
    fs::write(path, out).map_err(write_err)?;
    let manifest = SplitManifest {
        train: ds.indices(Split::Train),
        val: ds.indices(Split::Val),
        test: ds.indices(Split::Test),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(split_manifest_path(path), json).map_err(write_err)
}

fn column_role(name: &str) -> Option<(char, usize)> {
    let mut chars = name.chars();
    let role = chars.next()?;
    let idx: usize = chars.as_str().parse().ok()?;
    matches!(role, 'x' | 'y' | 's').then_some((role, idx))
}

/// True when every header field follows the `x*/y*/s*` dataset layout.
pub fn is_dataset_layout(path: &Path) -> Result<bool> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| LikaError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| LikaError::Data(format!("{}: bad header: {e}", path.display())))?;
    Ok(header.iter().all(|h| column_role(h.trim()).is_some()))
}

/// Reads a dataset written by [`write_dataset`]. Falls back to a seeded
/// 70/15/15 shuffle when the split sidecar is missing.
pub fn read_dataset(path: &Path, seed: u64) -> Result<Dataset> {
    let table = read_table(path)?;
    let mut by_role: BTreeMap<char, Vec<(usize, usize)>> = BTreeMap::new();
    for (c, h) in table.header.iter().enumerate() {
        let (role, idx) = column_role(h).ok_or_else(|| {
            LikaError::Data(format!("{}: unexpected column {h:?}", path.display()))
        })?;
        by_role.entry(role).or_default().push((idx, c));
    }
    let cols = |role: char| -> Vec<usize> {
        let mut v = by_role.get(&role).cloned().unwrap_or_default();
        v.sort();
        v.into_iter().map(|(_, c)| c).collect()
    };
    let (xc, yc, sc) = (cols('x'), cols('y'), cols('s'));
    if xc.is_empty() || yc.is_empty() {
        return Err(LikaError::Data(format!(
            "{}: need at least one x and one y column",
            path.display()
        )));
    }
    if !sc.is_empty() && sc.len() != yc.len() {
        return Err(LikaError::Data(format!(
            "{}: {} sigma columns for {} targets",
            path.display(),
            sc.len(),
            yc.len()
        )));
    }
    let n = table.rows.len();
    let manifest_path = split_manifest_path(path);
    let split = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path)?;
        let m: SplitManifest = serde_json::from_str(&text).map_err(|e| {
            LikaError::Data(format!("{}: {e}", manifest_path.display()))
        })?;
        let mut split: Vec<Option<Split>> = vec![None; n];
        for (tag, rows) in [(Split::Train, &m.train), (Split::Val, &m.val), (Split::Test, &m.test)] {
            for &r in rows {
                match split.get_mut(r) {
                    Some(slot @ None) => *slot = Some(tag),
                    _ => {
                        return Err(LikaError::Data(format!(
                            "{}: row {r} missing or listed twice",
                            manifest_path.display()
                        )))
                    }
                }
            }
        }
        split
            .into_iter()
            .enumerate()
            .map(|(r, s)| {
                s.ok_or_else(|| {
                    LikaError::Data(format!("{}: row {r} not assigned", manifest_path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        random_splits(n, seed)
    };
    let sigma = (!sc.is_empty()).then(|| gather(&table.rows, &sc));
    Dataset::new(gather(&table.rows, &xc), gather(&table.rows, &yc), sigma, split)
}

/// Input shift severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NoiseLevel {
    NL0,
    NL1,
    NL2,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 3] = [NoiseLevel::NL0, NoiseLevel::NL1, NoiseLevel::NL2];

    /// Noise std as a fraction of each feature's train-split std.
    pub fn fraction(self) -> f64 {
        match self {
            NoiseLevel::NL0 => 0.0,
            NoiseLevel::NL1 => 0.25,
            NoiseLevel::NL2 => 0.5,
        }
    }
}

impl std::fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Adds Gaussian noise to every input; targets are untouched. The per-feature
/// scale comes from the train rows (all rows if there are none).
pub fn corrupt(ds: &Dataset, level: NoiseLevel, seed: u64) -> Dataset {
    let mut out = ds.clone();
    let frac = level.fraction();
    if frac == 0.0 {
        return out;
    }
    let stats = if ds.indices(Split::Train).is_empty() {
        column_stats(&ds.inputs)
    } else {
        ds.input_stats(Split::Train)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for mut row in out.inputs.rows_mut() {
        for (v, &(_, std)) in row.iter_mut().zip(&stats) {
            *v += frac * std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenz_rhs_examples() {
        assert_eq!(lorenz_rhs([0.0; 3]), [0.0; 3]);
        let d = lorenz_rhs([1.0, 1.0, 1.0]);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] + 5.0 / 3.0).abs() < 1e-15);
        let r = 72f64.sqrt();
        let d = lorenz_rhs([r, r, 27.0]);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    fn small_lorenz(noise: f64) -> LorenzConfig {
        LorenzConfig {
            n_samples: 200,
            burn_in: 1.0,
            noise_sigma: noise,
            seed: 3,
            ..LorenzConfig::default()
        }
    }

    #[test]
    fn zero_noise_centre_equals_target() {
        let cfg = small_lorenz(0.0);
        let ds = generate_lorenz(&cfg).unwrap();
        let c = cfg.window / 2;
        for i in 0..ds.n_rows() {
            for k in 0..3 {
                assert_eq!(ds.inputs[[i, 3 * c + k]], ds.targets[[i, k]]);
            }
        }
    }

    #[test]
    fn lorenz_splits_are_chronological_blocks() {
        let ds = generate_lorenz(&small_lorenz(0.5)).unwrap();
        let mut last = Split::Train;
        for &s in &ds.split {
            assert!(s >= last);
            last = s;
        }
        // 200 samples: blocks of 140/30/30, each losing window−1 = 8 rows.
        assert_eq!(ds.indices(Split::Train).len(), 132);
        assert_eq!(ds.indices(Split::Val).len(), 22);
        assert_eq!(ds.indices(Split::Test).len(), 22);
        assert_eq!(ds.input_dim(), 27);
    }

    #[test]
    fn lorenz_deterministic() {
        let a = generate_lorenz(&small_lorenz(0.5)).unwrap();
        let b = generate_lorenz(&small_lorenz(0.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lorenz_rejects_bad_steps() {
        let cfg = LorenzConfig {
            integration_step: 0.1,
            ..LorenzConfig::default()
        };
        assert!(generate_lorenz(&cfg).is_err());
    }

    #[test]
    fn synthetic_sigma_minimum() {
        assert_eq!(synthetic_sigma(0.0), 0.1);
        let ds = generate_synthetic(500, 1).unwrap();
        let s = ds.true_sigma.as_ref().unwrap();
        assert!(s.iter().all(|&v| (0.1..=0.9 + 1e-12).contains(&v)));
        assert_eq!(ds, generate_synthetic(500, 1).unwrap());
        assert_ne!(ds, generate_synthetic(500, 2).unwrap());
        assert!(generate_synthetic(9, 1).is_err());
    }

    #[test]
    fn random_splits_partition() {
        let s = random_splits(100, 4);
        let count = |t| s.iter().filter(|&&x| x == t).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (70, 15, 15));
    }

    #[test]
    fn corrupt_levels() {
        let ds = generate_synthetic(200, 5).unwrap();
        assert_eq!(corrupt(&ds, NoiseLevel::NL0, 1), ds);
        let msd = |l| {
            let c = corrupt(&ds, l, 9);
            assert_eq!(c.targets, ds.targets);
            (&c.inputs - &ds.inputs).mapv(|v| v * v).mean().unwrap()
        };
        let (a, b, c) = (msd(NoiseLevel::NL0), msd(NoiseLevel::NL1), msd(NoiseLevel::NL2));
        assert!(a < b && b < c);
        assert_eq!(corrupt(&ds, NoiseLevel::NL2, 4), corrupt(&ds, NoiseLevel::NL2, 4));
    }
}
