//! Model-feedback ranking: order videos from worst to best per-video
//! accuracy so human reviewers correct the most suspect labels first.

use std::cmp::Ordering;
use std::path::Path;

use super::eval::{evaluate, EvalConfig, Protocol};
use super::BenchError;
use crate::model::{ModelParams, VideoData};

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRank {
    pub video_id: String,
    pub accuracy: f64,
}

/// Rank videos ascending by sub-class accuracy (worst first), breaking ties
/// by video id. The result is independent of the input ordering.
pub fn rank_videos(
    params: &ModelParams,
    videos: &[VideoData],
    protocol: Protocol,
    cfg: &EvalConfig,
) -> Result<Vec<VideoRank>, BenchError> {
    let report = evaluate(params, videos, protocol, cfg)?;
    let mut ranks: Vec<VideoRank> = report
        .per_video_accuracy
        .into_iter()
        .map(|v| VideoRank { video_id: v.video_id, accuracy: v.accuracy })
        .collect();
    ranks.sort_by(|a, b| {
        a.accuracy
            .partial_cmp(&b.accuracy)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
    Ok(ranks)
}

/// Write the review worklist as `video_id,accuracy` rows, worst first,
/// optionally truncated to the worst `k` videos.
pub fn write_worklist_csv(
    path: &Path,
    ranks: &[VideoRank],
    worst: Option<usize>,
) -> Result<(), BenchError> {
    let limit = worst.unwrap_or(ranks.len());
    let mut text = String::from("video_id,accuracy\n");
    for rank in ranks.iter().take(limit) {
        text.push_str(&format!("{},{:.6}\n", rank.video_id, rank.accuracy));
    }
    std::fs::write(path, text).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::benchmark_classes;
    use crate::bench::test_support::{oracle_dataset, oracle_model};
    use crate::model::StepLabel;
    use crate::taxonomy::ClassConfidence;

    #[test]
    fn single_video_ranks_alone() {
        let params = oracle_model(1.0);
        let videos = oracle_dataset("only", 5, 4);
        let ranks =
            rank_videos(&params, &videos, Protocol::NoTemporal, &EvalConfig::default()).unwrap();
        assert_eq!(ranks.len(), 1);
        assert_eq!(ranks[0].video_id, "only");
        assert_eq!(ranks[0].accuracy, 1.0);
    }

    #[test]
    fn corrupted_labels_rank_below_the_clean_copy() {
        let params = oracle_model(1.0);
        let clean = oracle_dataset("clean", 5, 4).remove(0);
        let mut corrupted = clean.clone();
        corrupted.id = "corrupted".to_string();
        // Rotate every label to the next benchmark class so the (perfect)
        // predictions no longer match.
        let classes = benchmark_classes();
        for sequence in &mut corrupted.sequences {
            for label in &mut sequence.labels {
                let old = label.sub_class.unwrap();
                let pos = classes.iter().position(|&c| c == old).unwrap();
                *label =
                    StepLabel::new(Some(classes[(pos + 1) % 5]), ClassConfidence::ONE).unwrap();
            }
        }
        let videos = vec![clean, corrupted];
        let ranks =
            rank_videos(&params, &videos, Protocol::NoTemporal, &EvalConfig::default()).unwrap();
        assert_eq!(ranks[0].video_id, "corrupted");
        assert_eq!(ranks[0].accuracy, 0.0);
        assert_eq!(ranks[1].video_id, "clean");
        assert_eq!(ranks[1].accuracy, 1.0);
    }

    #[test]
    fn ordering_is_input_order_invariant_with_id_tiebreak() {
        let params = oracle_model(1.0);
        let a = {
            let mut v = oracle_dataset("zebra", 5, 4).remove(0);
            v.id = "zebra".to_string();
            v
        };
        let b = {
            let mut v = oracle_dataset("apple", 5, 4).remove(0);
            v.id = "apple".to_string();
            v
        };
        let forward = rank_videos(
            &params,
            &[a.clone(), b.clone()],
            Protocol::NoTemporal,
            &EvalConfig::default(),
        )
        .unwrap();
        let backward =
            rank_videos(&params, &[b, a], Protocol::NoTemporal, &EvalConfig::default()).unwrap();
        assert_eq!(forward, backward);
        // Equal accuracies: ids break the tie alphabetically.
        assert_eq!(forward[0].video_id, "apple");
        assert_eq!(forward[1].video_id, "zebra");
    }

    #[test]
    fn worklist_csv_truncates_to_worst_k() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("worklist.csv");
        let ranks = vec![
            VideoRank { video_id: "bad".to_string(), accuracy: 0.25 },
            VideoRank { video_id: "ok".to_string(), accuracy: 0.75 },
            VideoRank { video_id: "good".to_string(), accuracy: 1.0 },
        ];
        write_worklist_csv(&path, &ranks, Some(2)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "video_id,accuracy\nbad,0.250000\nok,0.750000\n");

        write_worklist_csv(&path, &ranks, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
    }
}
