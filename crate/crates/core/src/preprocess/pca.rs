use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Recording;

/// Principal axes retained from the MI-trial channel covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    /// `components[k]` is the k-th principal axis (length `n_channels`).
    pub components: Vec<Vec<f64>>,
    /// All eigenvalues, non-increasing, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
    pub explained_fraction: f64,
}

impl PcaModel {
    /// Number of retained components, `m′`.
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels.len();
        if self.mean.len() != c || self.components.iter().any(|v| v.len() != c) {
            return Err(Error::Shape("PCA model dimensions disagree".into()));
        }
        if self.components.is_empty() || self.components.len() > c {
            return Err(Error::Shape(format!(
                "PCA model keeps {} of {c} components",
                self.components.len()
            )));
        }
        Ok(())
    }
}

/// Fits PCA on all samples of `trials` concatenated in time; keeps the
/// smallest `m′` whose cumulative explained variance reaches `retention`.
pub fn pca_fit(trials: &[Recording], retention: f64) -> Result<PcaModel> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::Config(format!(
            "pca_retention must lie in (0, 1], got {retention}"
        )));
    }
    let first = trials
        .first()
        .ok_or_else(|| Error::InsufficientData("no trials for PCA".into()))?;
    let c = first.n_channels();
    if trials.iter().any(|t| t.channels() != first.channels()) {
        return Err(Error::Incompatible("PCA trials differ in channel set".into()));
    }
    let total: usize = trials.iter().map(Recording::n_samples).sum();
    if total <= c {
        return Err(Error::InsufficientData(format!(
            "{total} samples cannot estimate a {c}-channel covariance"
        )));
    }

    // Fixed accumulation order: trial by trial, sample by sample.
    let mut mean = vec![0.0; c];
    for t in trials {
        for row in t.samples().chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= total as f64);

    let mut cov = vec![0.0; c * c];
    let mut centered = vec![0.0; c];
    for t in trials {
        for row in t.samples().chunks_exact(c) {
            for ((x, v), m) in centered.iter_mut().zip(row).zip(&mean) {
                *x = v - m;
            }
            for i in 0..c {
                let xi = centered[i];
                for j in i..c {
                    cov[i * c + j] += xi * centered[j];
                }
            }
        }
    }
    let denom = (total - 1) as f64;
    let cov = DMatrix::from_fn(c, c, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        cov[a * c + b] / denom
    });

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total_var: f64 = eigenvalues.iter().sum();
    if !(total_var > 0.0) {
        return Err(Error::InsufficientData("PCA input has zero variance".into()));
    }

    let mut cum = 0.0;
    let mut keep = c;
    for (k, ev) in eigenvalues.iter().enumerate() {
        cum += ev;
        if cum / total_var >= retention - 1e-12 {
            keep = k + 1;
            break;
        }
    }
    let explained_fraction = eigenvalues[..keep].iter().sum::<f64>() / total_var;

    let components = order[..keep]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // Sign convention: the largest-magnitude entry is positive.
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    Ok(PcaModel {
        channels: first.channels().to_vec(),
        mean,
        components,
        eigenvalues,
        explained_fraction,
    })
}

/// Projects each sample row onto the retained axes; channels become
/// `pc0..pc{m′−1}` with no topology.
pub fn pca_project(rec: &Recording, model: &PcaModel) -> Result<Recording> {
    if rec.channels() != model.channels.as_slice() {
        return Err(Error::Incompatible(
            "recording channels do not match the PCA model".into(),
        ));
    }
    let m = model.n_components();
    let mut out = Vec::with_capacity(rec.n_samples() * m);
    for t in 0..rec.n_samples() {
        let row = rec.row(t);
        for comp in &model.components {
            out.push(
                comp.iter()
                    .zip(row)
                    .zip(&model.mean)
                    .map(|((w, x), mu)| w * (x - mu))
                    .sum(),
            );
        }
    }
    Recording::new(
        rec.sample_rate_hz(),
        (0..m).map(|k| format!("pc{k}")).collect(),
        out,
        Default::default(),
        rec.markers().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    fn rec(c: usize, samples: Vec<f64>) -> Recording {
        Recording::new(
            100.0,
            (0..c).map(|i| format!("x{i}")).collect(),
            samples,
            BTreeMap::new(),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn single_axis_variance() {
        let samples: Vec<f64> = (0..200)
            .flat_map(|t| [0.0, (t as f64 * 0.3).sin() * 4.0, 0.0])
            .collect();
        let model = pca_fit(&[rec(3, samples)], 0.7).unwrap();
        assert_eq!(model.n_components(), 1);
        let axis = &model.components[0];
        assert!((axis[1] - 1.0).abs() < 1e-12 && axis[0].abs() < 1e-12);
    }

    #[test]
    fn isotropic_needs_both_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let model = pca_fit(&[rec(2, samples)], 0.7).unwrap();
        assert_eq!(model.n_components(), 2);
        let share = model.eigenvalues[0] / model.eigenvalues.iter().sum::<f64>();
        assert!((share - 0.5).abs() < 0.05, "{share}");
    }

    #[test]
    fn orthonormal_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mix = [
            [1.0, 0.5, 0.0, 0.2],
            [0.0, 1.0, 0.3, 0.0],
            [0.1, 0.0, 2.0, 0.4],
            [0.0, 0.0, 0.0, 0.5],
        ];
        let mut samples = Vec::new();
        for _ in 0..500 {
            let z: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            for row in &mix {
                samples.push(row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + 3.0);
            }
        }
        let model = pca_fit(&[rec(4, samples)], 1.0).unwrap();
        assert_eq!(model.n_components(), 4);
        assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for (i, a) in model.components.iter().enumerate() {
            for (j, b) in model.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
            let pivot = a
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn projecting_the_mean_gives_zero() {
        let samples: Vec<f64> = (0..100).flat_map(|t| [t as f64, -(t as f64) * 0.5]).collect();
        let model = pca_fit(&[rec(2, samples)], 0.9).unwrap();
        let flat = rec(2, model.mean.repeat(10));
        let out = pca_project(&flat, &model).unwrap();
        assert!(out.samples().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(out.channels()[0], "pc0");
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            pca_fit(&[rec(3, vec![1.0; 9])], 0.7),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn channel_mismatch_on_project() {
        let model = pca_fit(
            &[rec(2, (0..40).map(|v| v as f64 * v as f64 % 7.0).collect())],
            0.5,
        )
        .unwrap();
        assert!(pca_project(&rec(3, vec![0.0; 9]), &model).is_err());
    }
}
