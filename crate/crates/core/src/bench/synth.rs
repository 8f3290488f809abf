//! Seeded synthetic sequence generation and feature blackout.
//!
//! Class signatures are rows of the type-II discrete cosine basis, a fixed
//! function of the sub-class id and the feature dimension — independent of
//! the dataset seed, so differently seeded datasets share the same class
//! geometry. The background pattern (constant 0.5) is orthogonal to every
//! signature, and the blackout vector (all zeros) is distinct from both.
//!
//! Generated feature values are narrowed through `f32` so that writing them
//! to the binary cache and reading them back is lossless: training from a
//! cache file and training from the in-memory dataset produce bitwise
//! identical losses.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchError, SynthConfig};
use crate::frames::{write_labels_csv, FrameLabel, LabelSource};
use crate::model::{
    save_manifest, write_feature_cache, DatasetManifest, FeatureSequence, ManifestVideo, StepLabel,
    MANIFEST_VERSION,
};
use crate::taxonomy::{ClassConfidence, SubClass};

/// The class-identifying pattern: `sig[j] = cos(pi * (id+1) * (2j+1) / 2F)`.
/// Distinct signatures are mutually orthogonal and orthogonal to the
/// constant background for any `feature_dim > 13`.
pub fn class_signature(class: SubClass, feature_dim: usize) -> Array1<f64> {
    let k = (class.id() + 1) as f64;
    let f = feature_dim as f64;
    Array1::from_shape_fn(feature_dim, |j| (PI * k * (2.0 * j as f64 + 1.0) / (2.0 * f)).cos())
}

/// The class-agnostic pattern carried by signal-free steps.
pub fn background_pattern(feature_dim: usize) -> Array1<f64> {
    Array1::from_elem(feature_dim, 0.5)
}

/// The stand-in for a blacked-out observation.
pub fn blackout_feature(feature_dim: usize) -> Array1<f64> {
    Array1::zeros(feature_dim)
}

/// One standard normal draw via Box–Muller.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let mut u1: f64 = rng.gen();
    while u1 == 0.0 {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Generate `count` labeled sequences. Ground-truth classes cycle through
/// `cfg.classes` round-robin; each step carries the class signature with
/// probability `signal_rate`, otherwise the background pattern, plus
/// Gaussian noise. Fully determined by `cfg.seed`.
pub fn generate_dataset(
    cfg: &SynthConfig,
    count: usize,
) -> Result<Vec<FeatureSequence>, BenchError> {
    cfg.validate()?;
    if count == 0 {
        return Err(BenchError::InvalidConfig("sequence count must be nonzero".to_string()));
    }
    let signatures: Vec<Array1<f64>> =
        cfg.classes.iter().map(|&c| class_signature(c, cfg.feature_dim)).collect();
    let background = background_pattern(cfg.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut sequences = Vec::with_capacity(count);
    for s in 0..count {
        let class_idx = s % cfg.classes.len();
        let class = cfg.classes[class_idx];
        let mut features = Array2::zeros((cfg.sequence_length, cfg.feature_dim));
        for i in 0..cfg.sequence_length {
            let visible = rng.gen::<f64>() < cfg.signal_rate;
            let base = if visible { &signatures[class_idx] } else { &background };
            for j in 0..cfg.feature_dim {
                let value = base[j] + cfg.noise_std * standard_normal(&mut rng);
                features[[i, j]] = value as f32 as f64;
            }
        }
        let labels = vec![
            StepLabel::new(Some(class), ClassConfidence::ONE).expect("labeled step");
            cfg.sequence_length
        ];
        sequences.push(FeatureSequence::new(features, labels)?);
    }
    Ok(sequences)
}

/// Replace each step independently with the all-zeros blackout vector with
/// probability `p`; the mask records replacements and labels are untouched.
pub fn apply_blackout(
    sequence: &FeatureSequence,
    p: f64,
    seed: u64,
) -> Result<FeatureSequence, BenchError> {
    apply_blackout_with(sequence, p, seed, &blackout_feature(sequence.features.ncols()))
}

/// [`apply_blackout`] with a caller-chosen replacement vector.
pub fn apply_blackout_with(
    sequence: &FeatureSequence,
    p: f64,
    seed: u64,
    blackout: &Array1<f64>,
) -> Result<FeatureSequence, BenchError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BenchError::InvalidProbability(p));
    }
    if blackout.len() != sequence.features.ncols() {
        return Err(BenchError::BlackoutDimension {
            expected: sequence.features.ncols(),
            found: blackout.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = sequence.features.clone();
    let mut mask = vec![false; sequence.len()];
    for (i, replaced) in mask.iter_mut().enumerate() {
        if rng.gen::<f64>() < p {
            features.row_mut(i).assign(blackout);
            *replaced = true;
        }
    }
    Ok(FeatureSequence { features, labels: sequence.labels.clone(), blackout_mask: mask })
}

/// File names produced by [`write_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

/// Generate a dataset and persist it as a manifest + feature cache +
/// frame-label CSV triple under `dir`. `latent_dim` is recorded in the
/// cache header for the model the dataset is meant to train.
pub fn write_dataset(
    dir: &Path,
    cfg: &SynthConfig,
    count: usize,
    latent_dim: usize,
    video_id: &str,
) -> Result<DatasetFiles, BenchError> {
    let sequences = generate_dataset(cfg, count)?;
    let features_path = dir.join("features.bin");
    let labels_path = dir.join("labels.csv");
    let manifest_path = dir.join("manifest.json");

    let feature_arrays: Vec<Array2<f64>> = sequences.iter().map(|s| s.features.clone()).collect();
    write_feature_cache(&features_path, latent_dim, &feature_arrays)?;

    let mut frame_labels = Vec::with_capacity(count * cfg.sequence_length);
    for (s, sequence) in sequences.iter().enumerate() {
        for (i, label) in sequence.labels.iter().enumerate() {
            frame_labels.push(FrameLabel {
                frame_index: (s * cfg.sequence_length + i) as u32,
                sub_class: label.sub_class,
                confidence: label.confidence,
                source: LabelSource::Auto,
            });
        }
    }
    write_labels_csv(&labels_path, &frame_labels)?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        sequence_length: cfg.sequence_length,
        spacing: 1.0,
        videos: vec![ManifestVideo {
            id: video_id.to_string(),
            features: "features.bin".to_string(),
            labels: "labels.csv".to_string(),
        }],
    };
    save_manifest(&manifest_path, &manifest)?;

    Ok(DatasetFiles { manifest: manifest_path, features: features_path, labels: labels_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::benchmark_classes;
    use crate::model::load_dataset;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            classes: vec![SubClass::MixedTraffic, SubClass::PaintedBikeLane],
            signal_rate: 0.5,
            noise_std: 0.1,
            feature_dim: 8,
            sequence_length: 10,
            seed: 7,
        }
    }

    #[test]
    fn signatures_are_orthogonal_and_seed_independent() {
        let f = 64;
        let classes = benchmark_classes();
        for (i, &a) in classes.iter().enumerate() {
            let sig_a = class_signature(a, f);
            // DCT rows have squared norm F/2.
            assert_abs_diff_eq!(sig_a.dot(&sig_a), f as f64 / 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(sig_a.dot(&background_pattern(f)), 0.0, epsilon = 1e-9);
            for &b in &classes[i + 1..] {
                let sig_b = class_signature(b, f);
                assert_abs_diff_eq!(sig_a.dot(&sig_b), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn full_signal_without_noise_carries_exact_signatures() {
        let cfg = SynthConfig { signal_rate: 1.0, noise_std: 0.0, ..tiny_config() };
        let sequences = generate_dataset(&cfg, 4).unwrap();
        for (s, sequence) in sequences.iter().enumerate() {
            let class = cfg.classes[s % cfg.classes.len()];
            let expected: Vec<f64> =
                class_signature(class, cfg.feature_dim).iter().map(|&v| v as f32 as f64).collect();
            for i in 0..sequence.len() {
                let row: Vec<f64> = sequence.features.row(i).to_vec();
                assert_eq!(row, expected, "sequence {s} step {i}");
            }
            assert!(sequence.labels.iter().all(|l| l.sub_class == Some(class)));
            assert!(sequence.labels.iter().all(|l| l.confidence == ClassConfidence::ONE));
        }
    }

    #[test]
    fn zero_signal_rate_yields_class_agnostic_features() {
        let cfg = SynthConfig { signal_rate: 0.0, noise_std: 0.0, ..tiny_config() };
        let sequences = generate_dataset(&cfg, 2).unwrap();
        let background: Vec<f64> =
            background_pattern(cfg.feature_dim).iter().map(|&v| v as f32 as f64).collect();
        for sequence in &sequences {
            for i in 0..sequence.len() {
                assert_eq!(sequence.features.row(i).to_vec(), background);
            }
        }
        // Same features for both classes: the labels are the only difference.
        assert_eq!(sequences[0].features, sequences[1].features);
        assert_ne!(sequences[0].labels[0].sub_class, sequences[1].labels[0].sub_class);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = tiny_config();
        let a = generate_dataset(&cfg, 6).unwrap();
        let b = generate_dataset(&cfg, 6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.features.iter().zip(y.features.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        let other = generate_dataset(&SynthConfig { seed: 8, ..cfg }, 6).unwrap();
        assert_ne!(a[0].features, other[0].features);
    }

    #[test]
    fn classes_cycle_round_robin() {
        let cfg = SynthConfig { classes: benchmark_classes(), ..tiny_config() };
        let sequences = generate_dataset(&cfg, 10).unwrap();
        for (s, sequence) in sequences.iter().enumerate() {
            assert_eq!(sequence.labels[0].sub_class, Some(cfg.classes[s % 5]));
        }
    }

    #[test]
    fn generated_features_survive_f32_narrowing() {
        let sequences = generate_dataset(&tiny_config(), 2).unwrap();
        for sequence in &sequences {
            for &v in sequence.features.iter() {
                assert_eq!(v, v as f32 as f64);
            }
        }
    }

    #[test]
    fn blackout_p_zero_is_identity() {
        let sequences = generate_dataset(&tiny_config(), 1).unwrap();
        let out = apply_blackout(&sequences[0], 0.0, 99).unwrap();
        assert_eq!(out.features, sequences[0].features);
        assert!(out.blackout_mask.iter().all(|&m| !m));
        assert_eq!(out.labels, sequences[0].labels);
    }

    #[test]
    fn blackout_p_one_zeroes_everything() {
        let sequences = generate_dataset(&tiny_config(), 1).unwrap();
        let out = apply_blackout(&sequences[0], 1.0, 99).unwrap();
        assert!(out.features.iter().all(|&v| v == 0.0));
        assert!(out.blackout_mask.iter().all(|&m| m));
        assert_eq!(out.labels, sequences[0].labels);
    }

    #[test]
    fn blackout_fraction_concentrates_at_half() {
        let cfg = SynthConfig { sequence_length: 10_000, feature_dim: 2, ..tiny_config() };
        let sequences = generate_dataset(&cfg, 1).unwrap();
        let out = apply_blackout(&sequences[0], 0.5, 1234).unwrap();
        let replaced = out.blackout_mask.iter().filter(|&&m| m).count() as f64;
        let fraction = replaced / 10_000.0;
        assert!((0.48..=0.52).contains(&fraction), "fraction {fraction}");
    }

    #[test]
    fn blackout_counts_follow_a_binomial_distribution() {
        // Chi-square goodness of fit over 1000 seeded sequences of N = 50
        // at p = 0.3; must not reject at alpha = 0.001.
        let n = 50;
        let p = 0.3;
        let cfg =
            SynthConfig { sequence_length: n, feature_dim: 2, noise_std: 0.0, ..tiny_config() };
        let base = generate_dataset(&cfg, 1).unwrap().remove(0);
        let mut counts = vec![0usize; n + 1];
        for seed in 0..1000u64 {
            let out = apply_blackout(&base, p, 500_000 + seed).unwrap();
            counts[out.blackout_mask.iter().filter(|&&m| m).count()] += 1;
        }

        // Pool the tails so every bin's expected count is at least 5.
        let binom = Binomial::new(p, n as u64).unwrap();
        let expected: Vec<f64> = (0..=n).map(|k| 1000.0 * binom.pmf(k as u64)).collect();
        let mut bins: Vec<(f64, f64)> = Vec::new();
        let mut acc_obs = 0.0;
        let mut acc_exp = 0.0;
        for k in 0..=n {
            acc_obs += counts[k] as f64;
            acc_exp += expected[k];
            if acc_exp >= 5.0 {
                bins.push((acc_obs, acc_exp));
                acc_obs = 0.0;
                acc_exp = 0.0;
            }
        }
        if acc_exp > 0.0 {
            let last = bins.last_mut().unwrap();
            last.0 += acc_obs;
            last.1 += acc_exp;
        }
        let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let critical = ChiSquared::new((bins.len() - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(
            stat < critical,
            "chi-square {stat:.2} exceeds critical {critical:.2} over {} bins",
            bins.len()
        );
    }

    #[test]
    fn blackout_rejects_bad_arguments() {
        let sequences = generate_dataset(&tiny_config(), 1).unwrap();
        assert!(matches!(
            apply_blackout(&sequences[0], 1.5, 0),
            Err(BenchError::InvalidProbability(_))
        ));
        let short = Array1::zeros(3);
        assert!(matches!(
            apply_blackout_with(&sequences[0], 0.5, 0, &short),
            Err(BenchError::BlackoutDimension { expected: 8, found: 3 })
        ));
    }

    #[test]
    fn custom_blackout_vector_is_used() {
        let sequences = generate_dataset(&tiny_config(), 1).unwrap();
        let gray = Array1::from_elem(8, 0.25);
        let out = apply_blackout_with(&sequences[0], 1.0, 3, &gray).unwrap();
        assert!(out.features.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn written_dataset_loads_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let files = write_dataset(dir.path(), &cfg, 4, 16, "synthetic").unwrap();
        let sequences = generate_dataset(&cfg, 4).unwrap();
        let videos = load_dataset(&files.manifest).unwrap();
        assert_eq!(videos.len(), 1);
        assert_eq!(videos[0].id, "synthetic");
        assert_eq!(videos[0].sequences.len(), 4);
        for (loaded, generated) in videos[0].sequences.iter().zip(&sequences) {
            for (a, b) in loaded.features.iter().zip(generated.features.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(loaded.labels, generated.labels);
        }
    }

    #[test]
    fn write_dataset_is_byte_reproducible() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let a = write_dataset(dir_a.path(), &cfg, 3, 8, "v").unwrap();
        let b = write_dataset(dir_b.path(), &cfg, 3, 8, "v").unwrap();
        assert_eq!(std::fs::read(&a.features).unwrap(), std::fs::read(&b.features).unwrap());
        assert_eq!(std::fs::read(&a.labels).unwrap(), std::fs::read(&b.labels).unwrap());
        assert_eq!(std::fs::read(&a.manifest).unwrap(), std::fs::read(&b.manifest).unwrap());
    }
}
