#include "irt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "doctest.h"
#include "irt/rng.hpp"

using namespace irt;

namespace {

EvalBox box(int id, double x, double y = 0.0, double z = 0.0,
            double score = 1.0) {
  EvalBox b;
  b.id = id;
  b.center = Eigen::Vector3d(x, y, z);
  b.score = score;
  return b;
}

// Independent greedy matcher: enumerate all in-radius pairs, sort by
// (distance, gt id, pred id), accept pairs whose boxes are both unused.
FrameMatches greedy_oracle(const std::vector<EvalBox>& gt,
                           const std::vector<EvalBox>& pred, double radius) {
  struct Cand {
    double d;
    int gi, pi;
  };
  std::vector<Cand> cands;
  for (size_t g = 0; g < gt.size(); ++g) {
    for (size_t p = 0; p < pred.size(); ++p) {
      const double d = (gt[g].center - pred[p].center).norm();
      if (d <= radius) cands.push_back({d, static_cast<int>(g),
                                        static_cast<int>(p)});
    }
  }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    return std::tie(a.d, gt[a.gi].id, pred[a.pi].id) <
           std::tie(b.d, gt[b.gi].id, pred[b.pi].id);
  });
  std::set<int> used_g, used_p;
  std::vector<std::tuple<int, int, double>> taken;
  for (const Cand& c : cands) {
    if (used_g.count(c.gi) || used_p.count(c.pi)) continue;
    used_g.insert(c.gi);
    used_p.insert(c.pi);
    taken.emplace_back(gt[c.gi].id, pred[c.pi].id, c.d);
  }
  std::sort(taken.begin(), taken.end());
  FrameMatches out;
  for (const auto& [g, p, d] : taken) {
    out.matches.emplace_back(g, p);
    out.distances.push_back(d);
  }
  out.false_positives = static_cast<int>(pred.size() - taken.size());
  out.false_negatives = static_cast<int>(gt.size() - taken.size());
  return out;
}

}  // namespace

TEST_CASE("identical box sets match perfectly") {
  std::vector<EvalBox> gt = {box(1, 0, 0), box(2, 5, 5), box(3, -3, 7)};
  std::vector<EvalBox> pred = {box(11, 0, 0), box(12, 5, 5), box(13, -3, 7)};
  const FrameMatches m = match_frame(gt, pred, 2.0);
  REQUIRE(m.matches.size() == 3);
  CHECK(m.false_positives == 0);
  CHECK(m.false_negatives == 0);
  CHECK(m.matches[0] == std::pair<int, int>(1, 11));
  CHECK(m.matches[1] == std::pair<int, int>(2, 12));
  CHECK(m.matches[2] == std::pair<int, int>(3, 13));
  for (double d : m.distances) CHECK(d == 0.0);
}

TEST_CASE("a prediction five meters away is both FP and FN") {
  const FrameMatches m =
      match_frame({box(1, 0, 0)}, {box(2, 5, 0)}, 2.0);
  CHECK(m.matches.empty());
  CHECK(m.false_positives == 1);
  CHECK(m.false_negatives == 1);
}

TEST_CASE("ties break on distance, then gt id, then pred id") {
  // Two gts equidistant from one prediction: lower gt id wins.
  FrameMatches m = match_frame({box(7, 1, 0), box(3, -1, 0)},
                               {box(5, 0, 0)}, 2.0);
  REQUIRE(m.matches.size() == 1);
  CHECK(m.matches[0] == std::pair<int, int>(3, 5));
  // One gt, two equidistant predictions: lower pred id wins.
  m = match_frame({box(1, 0, 0)}, {box(9, 1, 0), box(4, -1, 0)}, 2.0);
  REQUIRE(m.matches.size() == 1);
  CHECK(m.matches[0] == std::pair<int, int>(1, 4));
}

TEST_CASE("greedy matching agrees with an independent oracle") {
  Rng rng(301);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvalBox> gt, pred;
    const int ng = 1 + static_cast<int>(rng.index(8));
    const int np = static_cast<int>(rng.index(9));
    for (int i = 0; i < ng; ++i) {
      gt.push_back(box(i, rng.uniform(-4, 4), rng.uniform(-4, 4)));
    }
    for (int i = 0; i < np; ++i) {
      pred.push_back(box(100 + i, rng.uniform(-4, 4), rng.uniform(-4, 4)));
    }
    const FrameMatches got = match_frame(gt, pred, 2.0);
    const FrameMatches want = greedy_oracle(gt, pred, 2.0);
    CHECK(got.matches == want.matches);
    CHECK(got.false_positives == want.false_positives);
    CHECK(got.false_negatives == want.false_negatives);
    REQUIRE(got.distances.size() == want.distances.size());
    for (size_t i = 0; i < got.distances.size(); ++i) {
      CHECK(got.distances[i] == doctest::Approx(want.distances[i]));
    }
  }
}

TEST_CASE("MOTA hand example: ten gts, one FP, one FN") {
  // Frame 0: 5 gt, all matched plus one spurious prediction.
  // Frame 1: 5 gt, one missed.
  EvalFrame f0, f1;
  for (int i = 0; i < 5; ++i) {
    f0.ground_truth.push_back(box(i, 10.0 * i));
    f0.predictions.push_back(box(i, 10.0 * i));
    f1.ground_truth.push_back(box(i, 10.0 * i));
    if (i != 4) f1.predictions.push_back(box(i, 10.0 * i));
  }
  f0.predictions.push_back(box(99, 500.0));
  const SequenceSummary s = mota_and_recall({f0, f1});
  CHECK(s.gt == 10);
  CHECK(s.fp == 1);
  CHECK(s.fn == 1);
  CHECK(s.idsw == 0);
  CHECK(s.mota == doctest::Approx(0.8));
  CHECK(s.recall == doctest::Approx(0.9));
}

TEST_CASE("perfect tracking scores MOTA 1 and recall 1") {
  std::vector<EvalFrame> frames;
  for (int t = 0; t < 4; ++t) {
    EvalFrame f;
    for (int i = 0; i < 3; ++i) {
      f.ground_truth.push_back(box(i, 5.0 * i, 0.1 * t));
      f.predictions.push_back(box(i + 50, 5.0 * i, 0.1 * t));
    }
    frames.push_back(f);
  }
  const SequenceSummary s = mota_and_recall(frames);
  CHECK(s.mota == 1.0);
  CHECK(s.recall == 1.0);
  CHECK(s.idsw == 0);
  CHECK(s.mean_match_distance == doctest::Approx(0.0));
}

TEST_CASE("an identity swap mid-sequence counts one switch") {
  std::vector<EvalFrame> frames(3);
  for (int t = 0; t < 3; ++t) {
    frames[t].ground_truth.push_back(box(1, 0.0));
    frames[t].predictions.push_back(box(t < 1 ? 10 : 20, 0.0));
  }
  const SequenceSummary s = mota_and_recall(frames);
  CHECK(s.idsw == 1);
  CHECK(s.tp == 3);
  CHECK(s.mota == doctest::Approx(1.0 - 1.0 / 3.0));
}

TEST_CASE("switches are judged against the most recent matched frame") {
  // Matched to 10, then unmatched for a frame, then matched to 20: the gap
  // does not absolve the switch.
  std::vector<EvalFrame> frames(3);
  for (int t = 0; t < 3; ++t) frames[t].ground_truth.push_back(box(1, 0.0));
  frames[0].predictions.push_back(box(10, 0.0));
  frames[2].predictions.push_back(box(20, 0.0));
  CHECK(mota_and_recall(frames).idsw == 1);

  // Re-acquiring the same id after a gap is not a switch.
  frames[2].predictions[0].id = 10;
  CHECK(mota_and_recall(frames).idsw == 0);
}

TEST_CASE("score threshold filters predictions") {
  EvalFrame f;
  f.ground_truth.push_back(box(1, 0.0));
  f.predictions.push_back(box(2, 0.0, 0, 0, 0.3));
  CHECK(mota_and_recall({f}, 2.0, 0.0).tp == 1);
  CHECK(mota_and_recall({f}, 2.0, 0.5).tp == 0);
  CHECK(mota_and_recall({f}, 2.0, 0.3).tp == 1);  // threshold is inclusive
}

TEST_CASE("empty predictions give MOTA 0 and AMOTA 0") {
  std::vector<EvalFrame> frames(2);
  for (int t = 0; t < 2; ++t) frames[t].ground_truth.push_back(box(1, 0.0));
  const SequenceSummary s = mota_and_recall(frames);
  CHECK(s.mota == 0.0);
  CHECK(s.recall == 0.0);
  const SweepMetrics sweep = amota_amotp(frames);
  CHECK(sweep.amota == 0.0);
  CHECK(sweep.amotp == 0.0);
}

TEST_CASE("AMOTA/AMOTP hand-enumerated example") {
  // Two gts; one perfect high-confidence prediction, one at distance 1 with
  // low confidence, one far false positive in between.
  EvalFrame f;
  f.ground_truth.push_back(box(1, 0.0));
  f.ground_truth.push_back(box(2, 10.0));
  f.predictions.push_back(box(101, 0.0, 0, 0, 0.9));
  f.predictions.push_back(box(102, 11.0, 0, 0, 0.4));
  f.predictions.push_back(box(103, 100.0, 0, 0, 0.8));

  // Targets 0.5 and 1.0. Threshold 0.9 reaches recall 0.5 with no FP:
  // MOTAR = 1 - (0 - 0.5*2 + 1) / (0.5*2) = 1. Threshold 0.4 reaches recall
  // 1.0 with one FP: MOTAR = 1 - 1/2 = 0.5. AMOTP averages the mean match
  // distances 0 and 0.5.
  const SweepMetrics m = amota_amotp({f}, 2);
  REQUIRE(m.sweep.size() == 2);
  CHECK(m.sweep[0].first == doctest::Approx(0.5));
  CHECK(m.sweep[0].second == doctest::Approx(1.0));
  CHECK(m.sweep[1].first == doctest::Approx(1.0));
  CHECK(m.sweep[1].second == doctest::Approx(0.5));
  CHECK(m.amota == doctest::Approx(0.75));
  CHECK(m.amotp == doctest::Approx(0.25));
}

TEST_CASE("unachievable recall targets contribute zero") {
  // Only half the gts are ever predicted, so targets above 0.5 are
  // unachievable and pull AMOTA down.
  EvalFrame f;
  f.ground_truth.push_back(box(1, 0.0));
  f.ground_truth.push_back(box(2, 10.0));
  f.predictions.push_back(box(101, 0.0, 0, 0, 0.9));
  const SweepMetrics m = amota_amotp({f}, 4);
  REQUIRE(m.sweep.size() == 4);
  CHECK(m.sweep[0].second == doctest::Approx(1.0));  // target 0.25
  CHECK(m.sweep[1].second == doctest::Approx(1.0));  // target 0.50
  CHECK(m.sweep[2].second == 0.0);
  CHECK(m.sweep[3].second == 0.0);
  CHECK(m.amota == doctest::Approx(0.5));
  CHECK(m.amotp == doctest::Approx(0.0));
}

TEST_CASE("metrics are invariant to id relabeling") {
  Rng rng(302);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EvalFrame> frames(5);
    for (auto& f : frames) {
      const int ng = 1 + static_cast<int>(rng.index(4));
      for (int i = 0; i < ng; ++i) {
        f.ground_truth.push_back(
            box(i, rng.uniform(-8, 8), rng.uniform(-8, 8)));
      }
      const int np = static_cast<int>(rng.index(5));
      for (int i = 0; i < np; ++i) {
        f.predictions.push_back(box(i, rng.uniform(-8, 8), rng.uniform(-8, 8),
                                    0, rng.uniform(0.1, 1.0)));
      }
    }
    const SequenceSummary base = mota_and_recall(frames);
    // Bijective relabeling: id -> 7*id + 3 on both sides.
    std::vector<EvalFrame> relabeled = frames;
    for (auto& f : relabeled) {
      for (auto& b : f.ground_truth) b.id = 7 * b.id + 3;
      for (auto& b : f.predictions) b.id = 7 * b.id + 3;
    }
    const SequenceSummary remapped = mota_and_recall(relabeled);
    CHECK(base.mota == doctest::Approx(remapped.mota));
    CHECK(base.idsw == remapped.idsw);
    CHECK(base.tp == remapped.tp);
    CHECK(base.fp == remapped.fp);

    const SweepMetrics sa = amota_amotp(frames, 10);
    const SweepMetrics sb = amota_amotp(relabeled, 10);
    CHECK(sa.amota == doctest::Approx(sb.amota));
    CHECK(sa.amotp == doctest::Approx(sb.amotp));
    CHECK(sa.amota >= 0.0);
    CHECK(sa.amota <= 1.0);
    CHECK(base.mota <= 1.0);
  }
}

TEST_CASE("dropping a matched prediction never raises recall") {
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EvalFrame> frames(3);
    for (auto& f : frames) {
      for (int i = 0; i < 3; ++i) {
        f.ground_truth.push_back(box(i, rng.uniform(-5, 5)));
        f.predictions.push_back(
            box(i + 10, rng.uniform(-5, 5), 0, 0, rng.uniform(0.1, 1.0)));
      }
    }
    const double before = mota_and_recall(frames).recall;
    std::vector<EvalFrame> fewer = frames;
    fewer[1].predictions.pop_back();
    CHECK(mota_and_recall(fewer).recall <= before + 1e-12);
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(match_frame({box(1, 0)}, {box(2, 0)}, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(match_frame({box(1, 0), box(1, 3)}, {}, 2.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(match_frame({}, {box(2, 0), box(2, 3)}, 2.0),
                  std::invalid_argument);
  std::vector<EvalFrame> no_gt(2);
  no_gt[0].predictions.push_back(box(1, 0.0));
  CHECK_THROWS_AS(mota_and_recall(no_gt), std::invalid_argument);
  CHECK_THROWS_AS(amota_amotp(no_gt), std::invalid_argument);
  EvalFrame ok;
  ok.ground_truth.push_back(box(1, 0.0));
  CHECK_THROWS_AS(amota_amotp({ok}, 0), std::invalid_argument);
}

TEST_CASE("mask IoU") {
  Image a(4, 3, 1), b(4, 3, 1);
  CHECK(mask_iou(a, b) == 1.0);  // both empty

  a.at(0, 0) = 1.0;
  a.at(1, 0) = 1.0;
  b.at(1, 0) = 1.0;
  b.at(2, 0) = 1.0;
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, a) == doctest::Approx(1.0));

  Image c(4, 3, 1);
  c.at(3, 2) = 1.0;
  CHECK(mask_iou(a, c) == doctest::Approx(0.0));

  // Soft masks use sum(min)/sum(max).
  Image s1(2, 1, 1), s2(2, 1, 1);
  s1.at(0, 0) = 0.5;
  s2.at(0, 0) = 0.25;
  s1.at(1, 0) = 0.2;
  s2.at(1, 0) = 0.8;
  CHECK(mask_iou(s1, s2) == doctest::Approx(0.45 / 1.3));

  Image wrong(3, 3, 1);
  CHECK_THROWS_AS(mask_iou(a, wrong), std::invalid_argument);
  Image rgb(4, 3, 3), rgb2(4, 3, 3);
  CHECK_THROWS_AS(mask_iou(rgb, rgb2), std::invalid_argument);
}
