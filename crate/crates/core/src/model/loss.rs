//! Confidence-weighted hierarchical cross-entropy: the training objective is
//! the mean over steps of `conf * (w_m * CE(main) + w_s * CE(sub))`, where
//! the sub-class cross-entropy is taken over the children of the step's TRUE
//! main class (teacher forcing). Steps without a label or with zero
//! confidence contribute nothing, to the loss and to the gradient alike.

use ndarray::{Array2, ArrayView1};

use super::ModelError;
use crate::taxonomy::{ClassConfidence, SubClass, MAIN_CLASS_COUNT, SUB_CLASS_COUNT};

/// The supervision attached to one sequence step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLabel {
    pub sub_class: Option<SubClass>,
    pub confidence: ClassConfidence,
}

impl StepLabel {
    pub fn new(
        sub_class: Option<SubClass>,
        confidence: ClassConfidence,
    ) -> Result<Self, ModelError> {
        if sub_class.is_none() && confidence.value() != 0.0 {
            return Err(ModelError::InvalidLabel(confidence.value()));
        }
        Ok(StepLabel { sub_class, confidence })
    }

    pub fn unlabeled() -> Self {
        StepLabel { sub_class: None, confidence: ClassConfidence::ZERO }
    }
}

/// `-log softmax(logits)[target]`, numerically stable.
fn cross_entropy(logits: ArrayView1<f64>, target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Softmax minus one-hot, the cross-entropy gradient w.r.t. the logits.
fn cross_entropy_grad(logits: ArrayView1<f64>, target: usize, out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    out[target] -= 1.0;
}

fn check_shapes(
    main_logits: &Array2<f64>,
    sub_logits: &Array2<f64>,
    labels: &[StepLabel],
) -> Result<(), ModelError> {
    let steps = labels.len();
    for (what, got, want) in [
        ("main logit rows", main_logits.nrows(), steps),
        ("sub logit rows", sub_logits.nrows(), steps),
        ("main logit columns", main_logits.ncols(), MAIN_CLASS_COUNT),
        ("sub logit columns", sub_logits.ncols(), SUB_CLASS_COUNT),
    ] {
        if got != want {
            return Err(ModelError::ShapeMismatch {
                what: what.to_string(),
                expected: want,
                found: got,
            });
        }
    }
    Ok(())
}

/// Mean over steps of the confidence-weighted hierarchical cross-entropy.
pub fn hierarchical_loss(
    main_logits: &Array2<f64>,
    sub_logits: &Array2<f64>,
    labels: &[StepLabel],
    w_m: f64,
    w_s: f64,
) -> Result<f64, ModelError> {
    check_shapes(main_logits, sub_logits, labels)?;
    if labels.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut total = 0.0;
    for (step, label) in labels.iter().enumerate() {
        let conf = label.confidence.value();
        let Some(sub) = label.sub_class else { continue };
        if conf == 0.0 {
            continue;
        }
        let main = sub.main();
        let ce_main = cross_entropy(main_logits.row(step), main.id());

        let children = main.subclasses();
        let branch: Vec<f64> = children.iter().map(|c| sub_logits[[step, c.id()]]).collect();
        let within = children.iter().position(|c| *c == sub).expect("sub belongs to its main");
        let ce_sub = cross_entropy(ArrayView1::from(&branch), within);

        total += conf * (w_m * ce_main + w_s * ce_sub);
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of [`hierarchical_loss`] w.r.t. both logit matrices.
///
/// Sub-logit columns outside the true main class's branch receive exactly
/// zero gradient, as do all columns of zero-confidence steps.
pub fn hierarchical_loss_backward(
    main_logits: &Array2<f64>,
    sub_logits: &Array2<f64>,
    labels: &[StepLabel],
    w_m: f64,
    w_s: f64,
) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
    check_shapes(main_logits, sub_logits, labels)?;
    if labels.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let scale = 1.0 / labels.len() as f64;
    let mut d_main = Array2::zeros(main_logits.raw_dim());
    let mut d_sub = Array2::zeros(sub_logits.raw_dim());
    let mut buf5 = [0.0; MAIN_CLASS_COUNT];
    for (step, label) in labels.iter().enumerate() {
        let conf = label.confidence.value();
        let Some(sub) = label.sub_class else { continue };
        if conf == 0.0 {
            continue;
        }
        let main = sub.main();
        cross_entropy_grad(main_logits.row(step), main.id(), &mut buf5);
        for (j, g) in buf5.iter().enumerate() {
            d_main[[step, j]] = conf * w_m * scale * g;
        }

        let children = main.subclasses();
        let branch: Vec<f64> = children.iter().map(|c| sub_logits[[step, c.id()]]).collect();
        let within = children.iter().position(|c| *c == sub).expect("sub belongs to its main");
        let mut branch_grad = vec![0.0; children.len()];
        cross_entropy_grad(ArrayView1::from(&branch), within, &mut branch_grad);
        for (c, g) in children.iter().zip(&branch_grad) {
            d_sub[[step, c.id()]] = conf * w_s * scale * g;
        }
    }
    Ok((d_main, d_sub))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::MainClass;
    use approx::assert_abs_diff_eq;

    fn labeled(sub: SubClass, conf: f64) -> StepLabel {
        StepLabel::new(Some(sub), ClassConfidence::new(conf).unwrap()).unwrap()
    }

    #[test]
    fn zero_confidence_means_zero_loss() {
        let main = Array2::from_elem((3, 5), 0.7);
        let sub = Array2::from_elem((3, 13), -0.2);
        let labels = vec![
            labeled(SubClass::Sharrow, 0.0),
            StepLabel::unlabeled(),
            labeled(SubClass::BusLane, 0.0),
        ];
        assert_eq!(hierarchical_loss(&main, &sub, &labels, 1.0, 0.5).unwrap(), 0.0);
        let (dm, ds) = hierarchical_loss_backward(&main, &sub, &labels, 1.0, 0.5).unwrap();
        assert!(dm.iter().all(|v| *v == 0.0));
        assert!(ds.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uniform_predictions_give_one_and_a_half_log_five() {
        // Uniform 5-way main softmax and uniform 5-child sub branch:
        // loss = 1.0 * ln 5 + 0.5 * ln 5.
        let main = Array2::zeros((1, 5));
        let sub = Array2::zeros((1, 13));
        let labels = vec![labeled(SubClass::MixedTraffic, 1.0)];
        let loss = hierarchical_loss(&main, &sub, &labels, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(loss, 1.5 * 5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 2.4141568686511508, epsilon = 1e-12);
    }

    #[test]
    fn singleton_branch_costs_nothing_extra() {
        // ProtectedBikeLane is its main class's only child: sub-CE = ln 1 = 0.
        let main = Array2::zeros((1, 5));
        let sub = Array2::zeros((1, 13));
        let labels = vec![labeled(SubClass::ProtectedBikeLane, 1.0)];
        let loss = hierarchical_loss(&main, &sub, &labels, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(loss, 5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn loss_is_linear_in_sub_weight() {
        let mut main = Array2::zeros((2, 5));
        main[[0, 2]] = 1.3;
        main[[1, 0]] = -0.4;
        let mut sub = Array2::zeros((2, 13));
        sub[[0, 7]] = 0.9;
        sub[[1, 1]] = 0.2;
        let labels =
            vec![labeled(SubClass::BufferedKerbSide, 0.8), labeled(SubClass::Shoulder, 0.6)];
        let base = hierarchical_loss(&main, &sub, &labels, 1.0, 0.5).unwrap();
        let doubled = hierarchical_loss(&main, &sub, &labels, 1.0, 1.0).unwrap();
        let main_only = hierarchical_loss(&main, &sub, &labels, 1.0, 1e-300).unwrap();
        let sub_term = base - main_only;
        assert_abs_diff_eq!(doubled, base + sub_term, epsilon = 1e-9);
    }

    #[test]
    fn confidence_scales_loss_linearly() {
        let main = Array2::zeros((1, 5));
        let sub = Array2::zeros((1, 13));
        let full =
            hierarchical_loss(&main, &sub, &[labeled(SubClass::Sharrow, 1.0)], 1.0, 0.5).unwrap();
        let half =
            hierarchical_loss(&main, &sub, &[labeled(SubClass::Sharrow, 0.5)], 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(half, 0.5 * full, epsilon = 1e-12);
    }

    #[test]
    fn gradient_zero_outside_true_branch() {
        let mut rng_state = 0u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let main = Array2::from_shape_fn((1, 5), |_| next());
        let sub = Array2::from_shape_fn((1, 13), |_| next());
        let labels = vec![labeled(SubClass::BufferedRoadSide, 0.9)];
        let (dm, ds) = hierarchical_loss_backward(&main, &sub, &labels, 1.0, 0.5).unwrap();

        let buffered: Vec<usize> =
            MainClass::BufferedBikeLane.subclasses().iter().map(|s| s.id()).collect();
        for j in 0..13 {
            if buffered.contains(&j) {
                assert_ne!(ds[[0, j]], 0.0);
            } else {
                assert_eq!(ds[[0, j]], 0.0, "column {j} outside the branch must stay zero");
            }
        }
        // Main gradient rows sum to ~0 (softmax minus one-hot).
        assert_abs_diff_eq!(dm.row(0).sum(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut main = Array2::zeros((2, 5));
        let mut sub = Array2::zeros((2, 13));
        for (i, v) in main.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        for (i, v) in sub.iter_mut().enumerate() {
            *v = (i as f64 * 0.53).cos();
        }
        let labels = vec![labeled(SubClass::OffPath, 0.7), labeled(SubClass::SharedZone, 0.4)];
        let (dm, ds) = hierarchical_loss_backward(&main, &sub, &labels, 1.0, 0.5).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..5 {
                let mut p = main.clone();
                p[[i, j]] += h;
                let mut m = main.clone();
                m[[i, j]] -= h;
                let expect = (hierarchical_loss(&p, &sub, &labels, 1.0, 0.5).unwrap()
                    - hierarchical_loss(&m, &sub, &labels, 1.0, 0.5).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(dm[[i, j]], expect, epsilon = 1e-8);
            }
            for j in 0..13 {
                let mut p = sub.clone();
                p[[i, j]] += h;
                let mut m = sub.clone();
                m[[i, j]] -= h;
                let expect = (hierarchical_loss(&main, &p, &labels, 1.0, 0.5).unwrap()
                    - hierarchical_loss(&main, &m, &labels, 1.0, 0.5).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(ds[[i, j]], expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn labels_validate_consistency() {
        assert!(StepLabel::new(None, ClassConfidence::new(0.5).unwrap()).is_err());
        assert!(StepLabel::new(None, ClassConfidence::ZERO).is_ok());
        assert!(StepLabel::new(Some(SubClass::Sharrow), ClassConfidence::ZERO).is_ok());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let main = Array2::zeros((2, 5));
        let sub = Array2::zeros((1, 13));
        let labels = vec![labeled(SubClass::Sharrow, 1.0); 2];
        assert!(hierarchical_loss(&main, &sub, &labels, 1.0, 0.5).is_err());
    }
}
