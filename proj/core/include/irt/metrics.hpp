#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "irt/image.hpp"

namespace irt {

// One evaluated box: ground-truth boxes ignore `score`.
struct EvalBox {
  int id = 0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double score = 1.0;
};

// Ground truth and predictions for a single frame. Ids must be unique within
// each side of a frame.
struct EvalFrame {
  std::vector<EvalBox> ground_truth;
  std::vector<EvalBox> predictions;
};

// Result of greedy center-distance matching on one frame.
struct FrameMatches {
  // (gt id, pred id) pairs, sorted by gt id.
  std::vector<std::pair<int, int>> matches;
  // Center distance for each match, parallel to `matches`.
  std::vector<double> distances;
  int false_positives = 0;
  int false_negatives = 0;
};

// Greedily pairs ground truth and predictions by ascending center distance,
// keeping only pairs closer than `radius` (meters). Each box is used at most
// once; ties break on smaller distance, then lower gt id, then lower pred id.
// Throws std::invalid_argument on radius <= 0 or duplicate ids.
FrameMatches match_frame(const std::vector<EvalBox>& ground_truth,
                         const std::vector<EvalBox>& predictions,
                         double radius);

struct SequenceSummary {
  double mota = 0.0;
  double recall = 0.0;
  int idsw = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int gt = 0;
  // Mean center distance over all matches in the sequence; 0 when empty.
  double mean_match_distance = 0.0;
};

// Evaluates a whole sequence at one confidence threshold (predictions with
// score < threshold are dropped). An identity switch is counted whenever a
// ground-truth id is matched to a different prediction id than in its most
// recent matched frame. MOTA = 1 - (FP + FN + IDSW) / GT.
// Throws std::invalid_argument when the sequence has no ground-truth boxes.
SequenceSummary mota_and_recall(const std::vector<EvalFrame>& frames,
                                double radius = 2.0,
                                double score_threshold = 0.0);

struct SweepMetrics {
  double amota = 0.0;
  double amotp = 0.0;
  // Per-target (recall_target, motar) pairs for reporting; motar is 0 for
  // unachievable targets.
  std::vector<std::pair<double, double>> sweep;
};

// Confidence sweep over `n_thresholds` recall targets i/n (i = 1..n). For
// each target the highest confidence threshold whose achieved recall reaches
// the target is selected; its recall-normalized MOTA
//   MOTAR = max(0, 1 - (FP + IDSW - (1 - r) * GT + FN) / (r * GT))
// contributes to AMOTA, and its mean match distance to AMOTP. Unachievable
// targets contribute MOTAR = 0 and are excluded from the AMOTP average.
SweepMetrics amota_amotp(const std::vector<EvalFrame>& frames,
                         int n_thresholds = 40, double radius = 2.0);

// Soft intersection-over-union between two single-channel masks of the same
// shape: sum(min) / sum(max). Returns 1 when both masks are identically zero.
double mask_iou(const Image& a, const Image& b);

}  // namespace irt
