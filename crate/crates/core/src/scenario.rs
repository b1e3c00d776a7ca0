//! Synthetic multitemporal scenes and classifier perturbation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SctError};
use crate::linsvm::accuracy;
use crate::types::{BinaryView, ClassId, ClassifierParams, LabeledDataset, TimedClassifier};

/// Movement of a class mean over time; `d` is the date in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    None,
    /// `mean0 + velocity·d`
    Linear { velocity: Vec<f64> },
    /// `mean0 + linear·d + quadratic·d²`
    Quadratic { linear: Vec<f64>, quadratic: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDriftSpec {
    pub class: ClassId,
    pub mean0: Vec<f64>,
    pub drift: Drift,
    /// Row-major `m×m` covariance.
    pub covariance: Vec<Vec<f64>>,
    pub samples: usize,
}

impl ClassDriftSpec {
    pub fn mean_at(&self, date: i64) -> Vec<f64> {
        let d = date as f64;
        match &self.drift {
            Drift::None => self.mean0.clone(),
            Drift::Linear { velocity } => self.mean0.iter().zip(velocity).map(|(m, v)| m + v * d).collect(),
            Drift::Quadratic { linear, quadratic } => self
                .mean0
                .iter()
                .zip(linear)
                .zip(quadratic)
                .map(|((m, l), q)| m + l * d + q * d * d)
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.mean0.len();
        if m == 0 {
            return Err(SctError::InvalidArgument(format!("class {}: empty mean", self.class)));
        }
        let lens: Vec<usize> = match &self.drift {
            Drift::None => vec![],
            Drift::Linear { velocity } => vec![velocity.len()],
            Drift::Quadratic { linear, quadratic } => vec![linear.len(), quadratic.len()],
        };
        for found in lens.into_iter().chain(std::iter::once(self.covariance.len())) {
            if found != m {
                return Err(SctError::Dimension { expected: m, found });
            }
        }
        if let Some(row) = self.covariance.iter().find(|r| r.len() != m) {
            return Err(SctError::Dimension {
                expected: m,
                found: row.len(),
            });
        }
        if self.samples == 0 {
            return Err(SctError::InvalidArgument(format!("class {}: samples must be at least 1", self.class)));
        }
        let all = self.mean0.iter().chain(self.covariance.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(SctError::InvalidArgument(format!("class {}: non-finite value", self.class)));
        }
        Ok(())
    }

    /// Factor `L` with `L Lᵀ = Σ`, or an error when `Σ` is not symmetric PSD.
    fn factor(&self) -> Result<DMatrix<f64>> {
        let m = self.mean0.len();
        let cov = DMatrix::from_fn(m, m, |i, j| self.covariance[i][j]);
        let scale = cov.amax().max(1e-300);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(SctError::NonPsdCovariance(self.class));
        }
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(SctError::NonPsdCovariance(self.class));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub classes: Vec<ClassDriftSpec>,
    pub dates: Vec<i64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(SctError::InvalidArgument("a scenario needs at least 2 classes".into()));
        }
        if self.dates.len() < 2 {
            return Err(SctError::InvalidArgument("a scenario needs at least 2 dates".into()));
        }
        if self.dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SctError::Validation("dates must be strictly increasing".into()));
        }
        let m = self.classes[0].mean0.len();
        let mut ids: Vec<ClassId> = self.classes.iter().map(|c| c.class).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.classes.len() {
            return Err(SctError::Validation("duplicate class id".into()));
        }
        for c in &self.classes {
            if c.mean0.len() != m {
                return Err(SctError::Dimension {
                    expected: m,
                    found: c.mean0.len(),
                });
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mean0.len())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Random stream for one (date, class) cell, independent of every other cell.
fn cell_rng(seed: u64, date_index: usize, class_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((date_index as u64) << 32) | class_index as u64);
    rng
}

/// Draws one dataset per date; rows are grouped by class in config order.
pub fn generate(cfg: &ScenarioConfig) -> Result<Vec<LabeledDataset>> {
    cfg.validate()?;
    let m = cfg.dim();
    let factors = cfg.classes.iter().map(|c| c.factor()).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(cfg.dates.len());
    for (di, &date) in cfg.dates.iter().enumerate() {
        let total: usize = cfg.classes.iter().map(|c| c.samples).sum();
        let mut x = DMatrix::zeros(total, m);
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for (ci, (spec, l)) in cfg.classes.iter().zip(&factors).enumerate() {
            let mean = DVector::from_vec(spec.mean_at(date));
            let mut rng = cell_rng(cfg.seed, di, ci);
            for _ in 0..spec.samples {
                let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let s = &mean + l * z;
                x.row_mut(row).copy_from(&s.transpose());
                labels.push(spec.class);
                row += 1;
            }
        }
        out.push(LabeledDataset::new(x, labels, date)?);
    }
    Ok(out)
}

/// Adds isotropic Gaussian noise to the stacked parameters of `optimal` until
/// its accuracy on `eval_set` falls in `[lo, hi]`.
///
/// The noise scale doubles after a draw that is too accurate and halves after
/// one that is too poor. The unperturbed classifier is returned when it already
/// lies in the band.
pub fn perturb_to_band(
    optimal: &ClassifierParams,
    eval_set: &BinaryView,
    band: (f64, f64),
    noise_scale: f64,
    seed: u64,
    max_attempts: usize,
    date: i64,
) -> Result<TimedClassifier> {
    let (lo, hi) = band;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(SctError::InvalidArgument(format!("invalid band [{lo}, {hi}]")));
    }
    if !noise_scale.is_finite() || noise_scale < 0.0 {
        return Err(SctError::InvalidArgument(format!("invalid noise scale {noise_scale}")));
    }
    let inside = |a: f64| a >= lo && a <= hi;
    let distance = |a: f64| if a < lo { lo - a } else { (a - hi).max(0.0) };

    let base = accuracy(optimal, eval_set)?;
    if inside(base) {
        return Ok(TimedClassifier::new(optimal.clone(), date).with_accuracy(base));
    }
    let p = optimal.stacked();
    let mut scale = if noise_scale > 0.0 { noise_scale } else { 0.1 * p.norm().max(1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = base;
    for _ in 0..max_attempts {
        let noisy = DVector::from_fn(p.len(), |i, _| p[i] + scale * rng.sample::<f64, _>(StandardNormal));
        let cand = ClassifierParams::new(noisy.rows(0, p.len() - 1).iter().copied().collect(), noisy[p.len() - 1])?;
        let acc = accuracy(&cand, eval_set)?;
        if inside(acc) {
            return Ok(TimedClassifier::new(cand, date).with_accuracy(acc));
        }
        if distance(acc) < distance(best) {
            best = acc;
        }
        if acc > hi {
            scale *= 2.0;
        } else {
            scale *= 0.5;
        }
    }
    Err(SctError::BandUnreachable { lo, hi, best })
}

fn diag(values: &[f64]) -> Vec<Vec<f64>> {
    let m = values.len();
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { values[i] } else { 0.0 }).collect())
        .collect()
}

/// Covariance with per-band standard deviations `sd` and a common correlation `rho`.
fn correlated(sd: &[f64], rho: f64) -> Vec<Vec<f64>> {
    (0..sd.len())
        .map(|i| {
            (0..sd.len())
                .map(|j| sd[i] * sd[j] * if i == j { 1.0 } else { rho })
                .collect()
        })
        .collect()
}

/// Five classes in six reflectance bands (blue, green, red, NIR, SWIR1, SWIR2)
/// at five dates ten days apart, 200 samples per class and date.
///
/// Classes 1 and 2 are crops: red and SWIR fall and NIR rises along curved
/// trajectories. Classes 3, 4 and 5 (soil, water, built-up) are static. Band
/// noise is strongly correlated, so the classes separate along directions that
/// a handful of samples pins down poorly.
pub fn paper_like(seed: u64) -> ScenarioConfig {
    let cov = correlated(&[0.020, 0.024, 0.030, 0.060, 0.050, 0.040], 0.8);
    let spec = |class: u32, mean0: [f64; 6], drift: Drift| ClassDriftSpec {
        class: ClassId(class),
        mean0: mean0.to_vec(),
        drift,
        covariance: cov.clone(),
        samples: 200,
    };
    ScenarioConfig {
        classes: vec![
            spec(
                1,
                [0.05, 0.08, 0.07, 0.25, 0.18, 0.10],
                Drift::Quadratic {
                    linear: vec![0.0, 0.0, -0.0008, 0.003, -0.001, -0.0005],
                    quadratic: vec![0.0, 0.0, 0.0, 0.000_05, 0.0, 0.0],
                },
            ),
            spec(
                2,
                [0.06, 0.09, 0.09, 0.22, 0.20, 0.13],
                Drift::Quadratic {
                    linear: vec![0.0, 0.0, -0.0003, 0.001, -0.0005, 0.0],
                    quadratic: vec![0.0, 0.0, -0.000_02, 0.0001, 0.0, 0.0],
                },
            ),
            spec(3, [0.09, 0.12, 0.15, 0.22, 0.28, 0.22], Drift::None),
            spec(4, [0.06, 0.05, 0.04, 0.03, 0.02, 0.01], Drift::None),
            spec(5, [0.10, 0.11, 0.13, 0.18, 0.22, 0.19], Drift::None),
        ],
        dates: vec![0, 10, 20, 30, 40],
        seed,
    }
}

/// Two overlapping classes in four bands at ten dates sixteen days apart,
/// 500 samples per class and date. Both means share one linear drift, so the
/// achievable accuracy stays level while the classifiers move.
pub fn landsat_like(seed: u64) -> ScenarioConfig {
    let cov = diag(&[0.0004, 0.0004, 0.0016, 0.0009]);
    ScenarioConfig {
        classes: vec![
            ClassDriftSpec {
                class: ClassId(1),
                mean0: vec![0.08, 0.10, 0.25, 0.20],
                drift: Drift::Linear {
                    velocity: vec![0.0001, -0.0002, 0.0010, -0.0002],
                },
                covariance: cov.clone(),
                samples: 500,
            },
            ClassDriftSpec {
                class: ClassId(2),
                mean0: vec![0.09, 0.12, 0.20, 0.23],
                drift: Drift::Linear {
                    velocity: vec![0.0001, -0.0002, 0.0010, -0.0002],
                },
                covariance: cov,
                samples: 500,
            },
        ],
        dates: (0..10).map(|i| 16 * i).collect(),
        seed,
    }
}
