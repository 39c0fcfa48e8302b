#include "irt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace irt {

namespace {

void check_unique_ids(const std::vector<EvalBox>& boxes, const char* side) {
  std::unordered_set<int> seen;
  for (const EvalBox& box : boxes) {
    if (!seen.insert(box.id).second) {
      throw std::invalid_argument(std::string("duplicate ") + side +
                                  " id in frame: " + std::to_string(box.id));
    }
  }
}

struct Candidate {
  double distance;
  int gt_index;
  int pred_index;
};

}  // namespace

FrameMatches match_frame(const std::vector<EvalBox>& ground_truth,
                         const std::vector<EvalBox>& predictions,
                         double radius) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("match radius must be positive");
  }
  check_unique_ids(ground_truth, "ground-truth");
  check_unique_ids(predictions, "prediction");

  std::vector<Candidate> candidates;
  for (int g = 0; g < static_cast<int>(ground_truth.size()); ++g) {
    for (int p = 0; p < static_cast<int>(predictions.size()); ++p) {
      const double d =
          (ground_truth[g].center - predictions[p].center).norm();
      if (d <= radius) candidates.push_back({d, g, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](const Candidate& a, const Candidate& b) {
              if (a.distance != b.distance) return a.distance < b.distance;
              const int ga = ground_truth[a.gt_index].id;
              const int gb = ground_truth[b.gt_index].id;
              if (ga != gb) return ga < gb;
              return predictions[a.pred_index].id <
                     predictions[b.pred_index].id;
            });

  std::vector<bool> gt_used(ground_truth.size(), false);
  std::vector<bool> pred_used(predictions.size(), false);
  std::vector<std::pair<int, std::pair<int, double>>> by_gt;
  for (const Candidate& c : candidates) {
    if (gt_used[c.gt_index] || pred_used[c.pred_index]) continue;
    gt_used[c.gt_index] = true;
    pred_used[c.pred_index] = true;
    by_gt.push_back({ground_truth[c.gt_index].id,
                     {predictions[c.pred_index].id, c.distance}});
  }
  std::sort(by_gt.begin(), by_gt.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  FrameMatches out;
  for (const auto& [gt_id, pred_and_dist] : by_gt) {
    out.matches.push_back({gt_id, pred_and_dist.first});
    out.distances.push_back(pred_and_dist.second);
  }
  out.false_positives =
      static_cast<int>(predictions.size() - out.matches.size());
  out.false_negatives =
      static_cast<int>(ground_truth.size() - out.matches.size());
  return out;
}

SequenceSummary mota_and_recall(const std::vector<EvalFrame>& frames,
                                double radius, double score_threshold) {
  SequenceSummary out;
  // Most recent prediction id matched to each ground-truth id, persisting
  // across frames where the object goes unmatched.
  std::unordered_map<int, int> last_pred;
  double distance_sum = 0.0;
  for (const EvalFrame& frame : frames) {
    std::vector<EvalBox> kept;
    for (const EvalBox& pred : frame.predictions) {
      if (pred.score >= score_threshold) kept.push_back(pred);
    }
    const FrameMatches fm = match_frame(frame.ground_truth, kept, radius);
    out.gt += static_cast<int>(frame.ground_truth.size());
    out.tp += static_cast<int>(fm.matches.size());
    out.fp += fm.false_positives;
    out.fn += fm.false_negatives;
    for (std::size_t i = 0; i < fm.matches.size(); ++i) {
      const auto [gt_id, pred_id] = fm.matches[i];
      distance_sum += fm.distances[i];
      auto it = last_pred.find(gt_id);
      if (it != last_pred.end() && it->second != pred_id) ++out.idsw;
      last_pred[gt_id] = pred_id;
    }
  }
  if (out.gt == 0) {
    throw std::invalid_argument(
        "mota_and_recall requires at least one ground-truth box");
  }
  out.recall = static_cast<double>(out.tp) / static_cast<double>(out.gt);
  out.mota =
      1.0 - static_cast<double>(out.fp + out.fn + out.idsw) / out.gt;
  out.mean_match_distance = out.tp > 0 ? distance_sum / out.tp : 0.0;
  return out;
}

SweepMetrics amota_amotp(const std::vector<EvalFrame>& frames,
                         int n_thresholds, double radius) {
  if (n_thresholds < 1) {
    throw std::invalid_argument("n_thresholds must be >= 1");
  }
  // Candidate thresholds are the distinct prediction scores; evaluating at
  // each keeps every prediction at least that confident.
  std::vector<double> scores;
  for (const EvalFrame& frame : frames) {
    for (const EvalBox& pred : frame.predictions) scores.push_back(pred.score);
  }
  std::sort(scores.begin(), scores.end(), std::greater<double>());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  std::vector<SequenceSummary> summaries;
  summaries.reserve(scores.size());
  for (double threshold : scores) {
    summaries.push_back(mota_and_recall(frames, radius, threshold));
  }

  SweepMetrics out;
  double amotp_sum = 0.0;
  int amotp_count = 0;
  for (int i = 1; i <= n_thresholds; ++i) {
    const double target = static_cast<double>(i) / n_thresholds;
    // Highest threshold (first in descending score order) achieving the
    // target recall.
    const SequenceSummary* chosen = nullptr;
    for (const SequenceSummary& s : summaries) {
      if (s.recall >= target) {
        chosen = &s;
        break;
      }
    }
    double motar = 0.0;
    if (chosen != nullptr) {
      const double r = chosen->recall;
      const double gt = static_cast<double>(chosen->gt);
      motar = 1.0 - (chosen->fp + chosen->idsw + chosen->fn -
                     (1.0 - r) * gt) /
                        (r * gt);
      motar = std::max(0.0, motar);
      amotp_sum += chosen->mean_match_distance;
      ++amotp_count;
    }
    out.sweep.push_back({target, motar});
    out.amota += motar;
  }
  out.amota /= n_thresholds;
  out.amotp = amotp_count > 0 ? amotp_sum / amotp_count : 0.0;
  return out;
}

double mask_iou(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.channels() != 1) {
    throw std::invalid_argument("mask_iou requires same-shape 1-channel masks");
  }
  double inter = 0.0;
  double uni = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n =
      static_cast<std::size_t>(a.width()) * a.height();
  for (std::size_t i = 0; i < n; ++i) {
    inter += std::min(pa[i], pb[i]);
    uni += std::max(pa[i], pb[i]);
  }
  return uni > 0.0 ? inter / uni : 1.0;
}

}  // namespace irt
