//! On-disk layout of every stage's output.
//!
//! - corpus: `manifest.json`, `train/mi_NNN.*`, `val_rest/rest_NNN.*`, `stream.*`
//! - preprocessed: `transforms.json`, `train/NNN.*`, `val_rest/NNN.*`, `stream.*`
//! - bundle: `bundle.json` plus one `ed_<channel>_<scale>.f32` per pair
//!
//! Series use a JSON header (`time`, `channels`, `scales`) and a time-major
//! little-endian f32 payload.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::predictor::{EdModel, EdShape};
use crate::preprocess::{CwtSpec, PcaModel, ScaleSeries};
use crate::quantizer::{Codebook, PairId};
use crate::signal_io::{load_recording, save_recording, Recording};

use super::config::PipelineConfig;
use super::stages::{Prepared, SplitCorpus};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusManifest {
    train_mi: usize,
    val_rest: usize,
}

fn indexed(dir: &Path, sub: &str, prefix: &str, i: usize) -> PathBuf {
    dir.join(sub).join(format!("{prefix}{i:03}"))
}

pub fn save_corpus(dir: &Path, corpus: &SplitCorpus) -> Result<()> {
    for (i, r) in corpus.train_mi.iter().enumerate() {
        save_recording(r, &indexed(dir, "train", "mi_", i))?;
    }
    for (i, r) in corpus.val_rest.iter().enumerate() {
        save_recording(r, &indexed(dir, "val_rest", "rest_", i))?;
    }
    save_recording(&corpus.stream, &dir.join("stream"))?;
    let manifest = CorpusManifest {
        train_mi: corpus.train_mi.len(),
        val_rest: corpus.val_rest.len(),
    };
    fsio::write_atomic(&dir.join("manifest.json"), &fsio::to_json_bytes(&manifest))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&fsio::read_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_corpus(dir: &Path) -> Result<SplitCorpus> {
    let m: CorpusManifest = read_json(&dir.join("manifest.json"))?;
    let load_all = |sub: &str, prefix: &str, n: usize| -> Result<Vec<Recording>> {
        (0..n)
            .map(|i| load_recording(&indexed(dir, sub, prefix, i)))
            .collect()
    };
    Ok(SplitCorpus {
        train_mi: load_all("train", "mi_", m.train_mi)?,
        val_rest: load_all("val_rest", "rest_", m.val_rest)?,
        stream: load_recording(&dir.join("stream"))?,
    })
}

/// Loads the continuous test stream of a corpus directory.
pub fn load_stream(dir: &Path) -> Result<Recording> {
    load_recording(&dir.join("stream"))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesHeader {
    time: usize,
    channels: usize,
    scales: usize,
}

pub fn save_series(series: &ScaleSeries, path: &Path) -> Result<()> {
    let header = SeriesHeader {
        time: series.time(),
        channels: series.channels(),
        scales: series.scales(),
    };
    fsio::write_atomic(
        &path.with_extension("f32"),
        &fsio::encode_f32(series.data().iter().copied()),
    )?;
    fsio::write_atomic(&path.with_extension("json"), &fsio::to_json_bytes(&header))
}

pub fn load_series(path: &Path) -> Result<ScaleSeries> {
    let h: SeriesHeader = read_json(&path.with_extension("json"))?;
    let raw = path.with_extension("f32");
    let data = fsio::decode_f32(&raw, &fsio::read_bytes(&raw)?)?;
    let expected = h.time * h.channels * h.scales;
    if data.len() != expected {
        return Err(Error::SampleCountMismatch {
            expected,
            found: data.len(),
        });
    }
    ScaleSeries::from_vec(h.time, h.channels, h.scales, data)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Transforms {
    pca: PcaModel,
    cwt: CwtSpec,
    codebook: Codebook,
    train: usize,
    val_rest: usize,
}

pub fn save_prepared(dir: &Path, prep: &Prepared) -> Result<()> {
    for (i, s) in prep.train.iter().enumerate() {
        save_series(s, &indexed(dir, "train", "", i))?;
    }
    for (i, s) in prep.val_rest.iter().enumerate() {
        save_series(s, &indexed(dir, "val_rest", "", i))?;
    }
    save_series(&prep.stream, &dir.join("stream"))?;
    let t = Transforms {
        pca: prep.pca.clone(),
        cwt: prep.cwt.clone(),
        codebook: prep.codebook.clone(),
        train: prep.train.len(),
        val_rest: prep.val_rest.len(),
    };
    fsio::write_atomic(&dir.join("transforms.json"), &fsio::to_json_bytes(&t))
}

fn check_series(s: &ScaleSeries, pca: &PcaModel, cwt: &CwtSpec) -> Result<()> {
    if (s.channels(), s.scales()) != (pca.n_components(), cwt.q()) {
        return Err(Error::Incompatible(format!(
            "series has {}×{} streams, transforms give m′ = {}, q = {}",
            s.channels(),
            s.scales(),
            pca.n_components(),
            cwt.q()
        )));
    }
    Ok(())
}

fn check_transforms(pca: &PcaModel, cwt: &CwtSpec, codebook: &Codebook) -> Result<()> {
    pca.validate()?;
    codebook.validate()?;
    if (codebook.channels(), codebook.scales()) != (pca.n_components(), cwt.q()) {
        return Err(Error::Incompatible("codebook disagrees with m′ or q".into()));
    }
    Ok(())
}

pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let t: Transforms = read_json(&dir.join("transforms.json"))?;
    check_transforms(&t.pca, &t.cwt, &t.codebook)?;
    let load_all = |sub: &str, n: usize| -> Result<Vec<ScaleSeries>> {
        (0..n)
            .map(|i| {
                let s = load_series(&indexed(dir, sub, "", i))?;
                check_series(&s, &t.pca, &t.cwt)?;
                Ok(s)
            })
            .collect()
    };
    let train = load_all("train", t.train)?;
    let val_rest = load_all("val_rest", t.val_rest)?;
    let stream = load_series(&dir.join("stream"))?;
    check_series(&stream, &t.pca, &t.cwt)?;
    Ok(Prepared {
        pca: t.pca,
        cwt: t.cwt,
        codebook: t.codebook,
        train,
        val_rest,
        stream,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    config: PipelineConfig,
    pca: PcaModel,
    cwt: CwtSpec,
    codebook: Codebook,
    shape: EdShape,
    weight_files: Vec<String>,
    threshold: Option<f64>,
}

/// Everything `detect` needs: transforms, the ED bank and `S_th`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub pca: PcaModel,
    pub cwt: CwtSpec,
    pub codebook: Codebook,
    pub models: Vec<EdModel>,
    /// `None` until tuned.
    pub threshold: Option<f64>,
}

impl ModelBundle {
    pub fn shape(&self) -> Result<EdShape> {
        let lengths = self.config.lengths()?;
        Ok(EdShape {
            input_len: lengths.input_len,
            output_len: lengths.output_len,
            levels: self.codebook.levels,
            hidden_size: self.config.train.hidden_size,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        check_transforms(&self.pca, &self.cwt, &self.codebook)?;
        if self.codebook.levels != self.config.v || self.cwt.q() != self.config.q {
            return Err(Error::Incompatible(
                "bundle transforms disagree with its config".into(),
            ));
        }
        let pairs = PairId::all(self.codebook.channels(), self.codebook.scales());
        if self.models.len() != pairs.len() {
            return Err(Error::Incompatible(format!(
                "bundle has {} models, m′·q = {}",
                self.models.len(),
                pairs.len()
            )));
        }
        let shape = self.shape()?;
        for (m, p) in self.models.iter().zip(&pairs) {
            if m.pair != *p || m.shape != shape {
                return Err(Error::Incompatible(format!(
                    "model {} does not fit the bundle",
                    m.pair
                )));
            }
            m.validate()?;
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("S_th must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }

    /// The tuned threshold, or [`Error::ThresholdNotTuned`].
    pub fn tuned_threshold(&self) -> Result<f64> {
        self.threshold.ok_or(Error::ThresholdNotTuned)
    }

    fn meta(&self) -> Result<BundleMeta> {
        Ok(BundleMeta {
            config: self.config.clone(),
            pca: self.pca.clone(),
            cwt: self.cwt.clone(),
            codebook: self.codebook.clone(),
            shape: self.shape()?,
            weight_files: self.models.iter().map(|m| EdModel::file_name(m.pair)).collect(),
            threshold: self.threshold,
        })
    }

    /// Writes the weight files first and `bundle.json` last.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        for m in &self.models {
            m.save(&dir.join(EdModel::file_name(m.pair)))?;
        }
        self.save_meta(dir)
    }

    /// Rewrites only `bundle.json`.
    pub fn save_meta(&self, dir: &Path) -> Result<()> {
        fsio::write_atomic(&dir.join("bundle.json"), &fsio::to_json_bytes(&self.meta()?))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bundle.json");
        let meta: BundleMeta = read_json(&path)?;
        let pairs = PairId::all(meta.codebook.channels(), meta.codebook.scales());
        if meta.weight_files.len() != pairs.len() {
            return Err(Error::format(&path, "weight file list does not match m′·q"));
        }
        let models = pairs
            .iter()
            .zip(&meta.weight_files)
            .map(|(&p, name)| {
                if *name != EdModel::file_name(p) {
                    return Err(Error::format(
                        &path,
                        format!("weight file {name} listed for pair {p}"),
                    ));
                }
                EdModel::load(p, meta.shape, &dir.join(name))
            })
            .collect::<Result<Vec<_>>>()?;
        let bundle = Self {
            config: meta.config,
            pca: meta.pca,
            cwt: meta.cwt,
            codebook: meta.codebook,
            models,
            threshold: meta.threshold,
        };
        if bundle.shape()? != meta.shape {
            return Err(Error::format(&path, "shape disagrees with the config"));
        }
        bundle.validate()?;
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn series_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..24).map(|i| (i as f32 * 0.37) as f64).collect();
        let s = ScaleSeries::from_vec(4, 2, 3, data).unwrap();
        let p = dir.path().join("s");
        save_series(&s, &p).unwrap();
        assert_eq!(load_series(&p).unwrap(), s);
        std::fs::write(p.with_extension("f32"), [0u8; 8]).unwrap();
        assert!(matches!(load_series(&p), Err(Error::SampleCountMismatch { .. })));
    }

    fn toy_bundle() -> ModelBundle {
        let mut config = PipelineConfig::default();
        config.v = 4;
        config.q = 2;
        config.train.hidden_size = 3;
        let cwt = config.cwt_spec().unwrap();
        let pca = PcaModel {
            channels: vec!["a".into(), "b".into()],
            mean: vec![0.0, 0.0],
            components: vec![vec![1.0, 0.0]],
            eigenvalues: vec![2.0, 1.0],
            explained_fraction: 2.0 / 3.0,
        };
        let codebook = Codebook {
            levels: 4,
            lo: vec![vec![-1.0, -2.0]],
            hi: vec![vec![1.0, 2.0]],
        };
        let shape = EdShape {
            input_len: 50,
            output_len: 50,
            levels: 4,
            hidden_size: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let models = PairId::all(1, 2)
            .into_iter()
            .map(|p| {
                let mut m = EdModel::random(p, shape, &mut rng);
                m.set_flat_params(
                    &m.flat_params()
                        .iter()
                        .map(|&w| w as f32 as f64)
                        .collect::<Vec<_>>(),
                )
                .unwrap();
                m
            })
            .collect();
        ModelBundle {
            config,
            pca,
            cwt,
            codebook,
            models,
            threshold: None,
        }
    }

    #[test]
    fn bundle_roundtrip_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = toy_bundle();
        b.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back, b);
        assert!(matches!(back.tuned_threshold(), Err(Error::ThresholdNotTuned)));
        b.threshold = Some(0.25);
        b.save_meta(dir.path()).unwrap();
        assert_eq!(
            ModelBundle::load(dir.path()).unwrap().tuned_threshold().unwrap(),
            0.25
        );
    }

    #[test]
    fn bundle_rejects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        toy_bundle().save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("ed_0_1.f32")).unwrap();
        assert!(matches!(ModelBundle::load(dir.path()), Err(Error::Io { .. })));
        let mut b = toy_bundle();
        b.models.swap(0, 1);
        assert!(b.save(dir.path()).is_err());
    }
}
