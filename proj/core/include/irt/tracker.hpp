// Frame-to-frame association: constant-velocity Kalman filtering over an
// 11-dim state [x, y, z, s, psi, w, h, l, vx, vy, vz], a weighted affinity
// (3D IoU + latent cosine similarity + exp-decayed center distance) solved
// by the Hungarian algorithm, EMA latent smoothing, and track lifecycle.

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "irt/fitting.hpp"
#include "irt/geometry.hpp"
#include "irt/prior.hpp"

namespace irt {

using Vec11 = Eigen::Matrix<double, 11, 1>;
using Mat11 = Eigen::Matrix<double, 11, 11>;

enum class TrackStatus { kTracked, kLost };

struct TrackState {
  Vec11 x = Vec11::Zero();
  Mat11 P = Mat11::Identity();
  LatentPair z_ema;
  int id = -1;
  TrackStatus status = TrackStatus::kTracked;
  int lost_count = 0;
  int age = 0;   // observed time steps T
  int hits = 0;  // total matched frames (confirmation counter)
  double last_score = 0.0;
};

/// Raw detector output for one object (the synthetic oracle plays the
/// detector's role).
struct Detection {
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
  double width = 0.0;   // lateral (y) extent in meters
  double height = 0.0;  // vertical (z) extent
  double length = 0.0;  // forward (x) extent
  double score = 1.0;
};

/// Measurement assembled from a detection and its refined fit.
struct Observation {
  Vec3 t = Vec3::Zero();
  double scale = 1.0;
  double yaw = 0.0;
  double width = 0.0, height = 0.0, length = 0.0;  // carried from detection
  LatentPair latents;
  LossBreakdown fit_loss;
  double score = 1.0;
};

struct AffinityConfig {
  double w_iou = 0.5;
  double w_latent = 0.25;
  double w_center = 0.25;
  double gate_distance = 10.0;  // meters; beyond this a pair is forbidden
  double min_affinity = 0.2;    // matches scoring below are discarded
  int n_life = 3;               // lost frames before deletion
};

struct TrackerConfig {
  AffinityConfig affinity;
  bool observe_dims = true;  // 8-dim measurement; false: 5-dim [t, s, psi]
  int min_hits = 2;          // matches needed before records are emitted
  double q_pose = 0.01;      // process noise, position/scale/yaw/dims
  double q_velocity = 0.1;
  double r_position = 0.25;  // measurement noise (variances)
  double r_scale = 0.04;
  double r_yaw = 0.00761544;  // (5 degrees)^2 in rad^2
  double r_dims = 0.1;
  double p0 = 1.0;            // initial covariance, observed components
  double p0_velocity = 1.0;
  std::optional<Camera> frustum;  // if set, tracks leaving it are removed
};

/// Yaw-rotated 3D box: length along heading, width lateral, height up.
struct Box3D {
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
  double width = 0.0, height = 0.0, length = 0.0;
};

/// Scale seed for a freshly detected object: max box dimension.
double initial_scale_from_dims(double width, double height, double length);

/// Builds the measurement for a matched/fitted object: position, heading
/// and scale come from the fit, box dimensions from the detection.
/// Throws on non-positive dimensions.
Observation make_observation(const Detection& detection, const FitResult& fit);

/// Constant-velocity transition (positions += velocities) and the default
/// process/measurement noise for a config.
Mat11 transition_matrix();
Mat11 process_noise(const TrackerConfig& cfg);
Eigen::MatrixXd observation_matrix(const TrackerConfig& cfg);
Eigen::MatrixXd measurement_noise(const TrackerConfig& cfg);

TrackState predict(const TrackState& track, const Mat11& A, const Mat11& Q);

/// Textbook Kalman update; the yaw component of the innovation is wrapped
/// to (-pi, pi] first. Throws std::invalid_argument when the innovation
/// covariance is singular.
TrackState kalman_update(const TrackState& track, const Eigen::VectorXd& y,
                         const Eigen::MatrixXd& H, const Eigen::MatrixXd& R);

/// BEV polygon-clipping IoU times vertical overlap.
double iou3d(const Box3D& a, const Box3D& b);

/// z <- beta*z_new + (1-beta)*z_ema with beta = clamp(2/(T-1), (0,1]).
LatentPair ema_update(const LatentPair& z_ema, const LatentPair& z_new, int T);

/// Pairwise score matrix between predicted tracks and observations;
/// -infinity marks gated (forbidden) pairs.
Eigen::MatrixXd affinity_matrix(const std::vector<TrackState>& tracks,
                                const std::vector<Observation>& observations,
                                const AffinityConfig& cfg);

/// Maximum-total-score assignment. Returns (row, col) pairs; entries scoring
/// -infinity are never assigned. Rectangular inputs are padded internally.
std::vector<std::pair<int, int>> hungarian_assign(const Eigen::MatrixXd& score);

/// One emitted line of tracker output.
struct TrackRecord {
  int frame = 0;
  int id = -1;
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
  double scale = 1.0;
  double width = 0.0, height = 0.0, length = 0.0;
  LatentPair latents;
  TrackStatus status = TrackStatus::kTracked;
  double score = 0.0;
};

/// Sequential per-sequence tracker. step() consumes one frame's worth of
/// observations and returns emitted records; records of a young track are
/// buffered until it reaches min_hits and are then flushed retroactively
/// (callers should order by the frame field).
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  std::vector<TrackRecord> step(const std::vector<Observation>& observations,
                                int frame);

  const std::vector<TrackState>& tracks() const { return tracks_; }
  int total_created() const { return next_id_; }

 private:
  TrackerConfig cfg_;
  std::vector<TrackState> tracks_;
  std::vector<std::vector<TrackRecord>> pending_;  // parallel to tracks_
  int next_id_ = 0;

  TrackRecord record_for(const TrackState& t, int frame) const;
};

}  // namespace irt
