#include "irt/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace irt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Indices into the 11-dim state.
enum : int { kX = 0, kY, kZ, kS, kPsi, kW, kH, kL, kVx, kVy, kVz };

double cosine_similarity(const LatentPair& a, const LatentPair& b) {
  const Eigen::Index n = a.shape.size() + a.texture.size();
  const Eigen::Index m = b.shape.size() + b.texture.size();
  if (n != m || n == 0) return 0.0;
  Eigen::VectorXd va(n), vb(n);
  va << a.shape, a.texture;
  vb << b.shape, b.texture;
  const double na = va.norm();
  const double nb = vb.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;  // undefined direction -> neutral
  return va.dot(vb) / (na * nb);
}

struct Pt {
  double x, y;
};

// Sutherland-Hodgman clip of a convex polygon against the half-plane to the
// left of edge a->b (for counter-clockwise clip polygons).
std::vector<Pt> clip_halfplane(const std::vector<Pt>& poly, const Pt& a,
                               const Pt& b) {
  std::vector<Pt> out;
  const double ex = b.x - a.x;
  const double ey = b.y - a.y;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& p = poly[i];
    const Pt& q = poly[(i + 1) % n];
    const double side_p = ex * (p.y - a.y) - ey * (p.x - a.x);
    const double side_q = ex * (q.y - a.y) - ey * (q.x - a.x);
    if (side_p >= 0.0) {
      out.push_back(p);
      if (side_q < 0.0) {
        const double t = side_p / (side_p - side_q);
        out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    } else if (side_q >= 0.0) {
      const double t = side_p / (side_p - side_q);
      out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
    }
  }
  return out;
}

double polygon_area(const std::vector<Pt>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& p = poly[i];
    const Pt& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return std::abs(a) * 0.5;
}

std::vector<Pt> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = b.length * 0.5;
  const double hw = b.width * 0.5;
  // Counter-clockwise in the xy plane.
  const Pt local[4] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::vector<Pt> out(4);
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.center.x() + c * local[i].x - s * local[i].y,
              b.center.y() + s * local[i].x + c * local[i].y};
  }
  return out;
}

Box3D box_from_state(const Vec11& x) {
  Box3D b;
  b.center = Vec3(x[kX], x[kY], x[kZ]);
  b.yaw = x[kPsi];
  b.width = x[kW];
  b.height = x[kH];
  b.length = x[kL];
  return b;
}

Box3D box_from_observation(const Observation& o) {
  Box3D b;
  b.center = o.t;
  b.yaw = o.yaw;
  b.width = o.width;
  b.height = o.height;
  b.length = o.length;
  return b;
}

// Classic O(n^2 m) potentials formulation of the Hungarian algorithm,
// minimizing cost with rows <= cols. Returns col index per row.
std::vector<int> hungarian_min(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

double initial_scale_from_dims(double width, double height, double length) {
  if (width <= 0.0 || height <= 0.0 || length <= 0.0) {
    throw std::invalid_argument("initial_scale_from_dims: non-positive dims");
  }
  return std::max({width, height, length});
}

Observation make_observation(const Detection& detection, const FitResult& fit) {
  if (detection.width <= 0.0 || detection.height <= 0.0 ||
      detection.length <= 0.0) {
    throw std::invalid_argument("make_observation: non-positive dims");
  }
  Observation o;
  o.t = fit.pose.t;
  o.scale = fit.scale;
  o.yaw = fit.pose.yaw();
  o.width = detection.width;
  o.height = detection.height;
  o.length = detection.length;
  o.latents = fit.latents;
  o.fit_loss = fit.final_loss;
  o.score = detection.score;
  return o;
}

Mat11 transition_matrix() {
  Mat11 a = Mat11::Identity();
  a(kX, kVx) = 1.0;
  a(kY, kVy) = 1.0;
  a(kZ, kVz) = 1.0;
  return a;
}

Mat11 process_noise(const TrackerConfig& cfg) {
  Mat11 q = Mat11::Zero();
  for (int i = kX; i <= kL; ++i) q(i, i) = cfg.q_pose;
  for (int i = kVx; i <= kVz; ++i) q(i, i) = cfg.q_velocity;
  return q;
}

Eigen::MatrixXd observation_matrix(const TrackerConfig& cfg) {
  const int rows = cfg.observe_dims ? 8 : 5;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows, 11);
  for (int i = 0; i < rows; ++i) h(i, i) = 1.0;
  return h;
}

Eigen::MatrixXd measurement_noise(const TrackerConfig& cfg) {
  const int rows = cfg.observe_dims ? 8 : 5;
  Eigen::VectorXd d(rows);
  d[0] = d[1] = d[2] = cfg.r_position;
  d[3] = cfg.r_scale;
  d[4] = cfg.r_yaw;
  if (cfg.observe_dims) d[5] = d[6] = d[7] = cfg.r_dims;
  return d.asDiagonal();
}

TrackState predict(const TrackState& track, const Mat11& A, const Mat11& Q) {
  TrackState out = track;
  out.x = A * track.x;
  out.P = A * track.P * A.transpose() + Q;
  out.P = 0.5 * (out.P + out.P.transpose());  // keep symmetric
  out.x[kPsi] = wrap_angle(out.x[kPsi]);
  return out;
}

TrackState kalman_update(const TrackState& track, const Eigen::VectorXd& y,
                         const Eigen::MatrixXd& H, const Eigen::MatrixXd& R) {
  if (H.cols() != 11 || H.rows() != y.size() || R.rows() != y.size() ||
      R.cols() != y.size()) {
    throw std::invalid_argument("kalman_update: dimension mismatch");
  }
  const Eigen::MatrixXd S = H * track.P * H.transpose() + R;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
  if (!lu.isInvertible()) {
    throw std::invalid_argument("kalman_update: singular innovation covariance");
  }
  Eigen::VectorXd innovation = y - H * track.x;
  if (y.size() >= 5) {
    innovation[4] = wrap_angle(innovation[4]);  // yaw component
  }
  const Eigen::MatrixXd K = track.P * H.transpose() * lu.inverse();
  TrackState out = track;
  out.x = track.x + K * innovation;
  out.x[kPsi] = wrap_angle(out.x[kPsi]);
  out.P = track.P - K * H * track.P;
  out.P = 0.5 * (out.P + out.P.transpose());
  return out;
}

double iou3d(const Box3D& a, const Box3D& b) {
  if (a.width <= 0.0 || a.height <= 0.0 || a.length <= 0.0 || b.width <= 0.0 ||
      b.height <= 0.0 || b.length <= 0.0) {
    return 0.0;
  }
  const double z_lo = std::max(a.center.z() - a.height * 0.5,
                               b.center.z() - b.height * 0.5);
  const double z_hi = std::min(a.center.z() + a.height * 0.5,
                               b.center.z() + b.height * 0.5);
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) return 0.0;

  std::vector<Pt> poly = bev_corners(a);
  const std::vector<Pt> clip = bev_corners(b);
  for (std::size_t i = 0; i < clip.size() && !poly.empty(); ++i) {
    poly = clip_halfplane(poly, clip[i], clip[(i + 1) % clip.size()]);
  }
  if (poly.size() < 3) return 0.0;
  const double inter = polygon_area(poly) * dz;
  const double vol_a = a.width * a.height * a.length;
  const double vol_b = b.width * b.height * b.length;
  const double denom = vol_a + vol_b - inter;
  if (denom <= 0.0) return 0.0;
  return std::clamp(inter / denom, 0.0, 1.0);
}

LatentPair ema_update(const LatentPair& z_ema, const LatentPair& z_new, int T) {
  double beta = 1.0;
  if (T > 3) beta = 2.0 / (T - 1.0);
  beta = std::clamp(beta, 0.0, 1.0);
  if (beta >= 1.0 || z_ema.shape.size() != z_new.shape.size() ||
      z_ema.texture.size() != z_new.texture.size()) {
    return z_new;  // replacement for young tracks (or first assignment)
  }
  LatentPair out;
  out.shape = beta * z_new.shape + (1.0 - beta) * z_ema.shape;
  out.texture = beta * z_new.texture + (1.0 - beta) * z_ema.texture;
  return out;
}

Eigen::MatrixXd affinity_matrix(const std::vector<TrackState>& tracks,
                                const std::vector<Observation>& observations,
                                const AffinityConfig& cfg) {
  if (cfg.w_iou < 0.0 || cfg.w_latent < 0.0 || cfg.w_center < 0.0 ||
      cfg.w_iou + cfg.w_latent + cfg.w_center <= 0.0) {
    throw std::invalid_argument("affinity_matrix: bad weights");
  }
  Eigen::MatrixXd a(tracks.size(), observations.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const Box3D box_t = box_from_state(tracks[i].x);
    for (std::size_t j = 0; j < observations.size(); ++j) {
      const Observation& o = observations[j];
      const double dist = (box_t.center - o.t).norm();
      if (dist > cfg.gate_distance) {
        a(i, j) = -kInf;
        continue;
      }
      a(i, j) = cfg.w_iou * iou3d(box_t, box_from_observation(o)) +
                cfg.w_latent * cosine_similarity(tracks[i].z_ema, o.latents) +
                cfg.w_center * std::exp(-dist / cfg.gate_distance);
    }
  }
  return a;
}

std::vector<std::pair<int, int>> hungarian_assign(const Eigen::MatrixXd& score) {
  const int rows = static_cast<int>(score.rows());
  const int cols = static_cast<int>(score.cols());
  if (rows == 0 || cols == 0) return {};
  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  const int side = std::max(n, m);

  // Minimize negated scores; gated pairs carry a huge finite penalty and
  // padding cells cost zero (equivalent to leaving the row unmatched).
  constexpr double kForbidden = 1e15;
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(side, side);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double s = transposed ? score(j, i) : score(i, j);
      cost(i, j) = std::isfinite(s) ? -s : kForbidden;
    }
  }
  const std::vector<int> row_to_col = hungarian_min(cost);
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    const int j = row_to_col[i];
    if (j < 0 || j >= m) continue;  // matched against padding
    const double s = transposed ? score(j, i) : score(i, j);
    if (!std::isfinite(s)) continue;  // gated
    out.emplace_back(transposed ? j : i, transposed ? i : j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(std::move(cfg)) {}

TrackRecord Tracker::record_for(const TrackState& t, int frame) const {
  TrackRecord r;
  r.frame = frame;
  r.id = t.id;
  r.center = Vec3(t.x[kX], t.x[kY], t.x[kZ]);
  r.yaw = t.x[kPsi];
  r.scale = t.x[kS];
  r.width = t.x[kW];
  r.height = t.x[kH];
  r.length = t.x[kL];
  r.latents = t.z_ema;
  r.status = t.status;
  r.score = t.last_score;
  return r;
}

std::vector<TrackRecord> Tracker::step(
    const std::vector<Observation>& observations, int frame) {
  const Mat11 A = transition_matrix();
  const Mat11 Q = process_noise(cfg_);
  const Eigen::MatrixXd H = observation_matrix(cfg_);
  const Eigen::MatrixXd R = measurement_noise(cfg_);

  for (TrackState& t : tracks_) {
    t = predict(t, A, Q);
  }

  std::vector<char> track_matched(tracks_.size(), 0);
  std::vector<char> obs_matched(observations.size(), 0);
  if (!tracks_.empty() && !observations.empty()) {
    const Eigen::MatrixXd score =
        affinity_matrix(tracks_, observations, cfg_.affinity);
    for (const auto& [i, j] : hungarian_assign(score)) {
      if (score(i, j) < cfg_.affinity.min_affinity) continue;
      const Observation& o = observations[j];
      Eigen::VectorXd y(H.rows());
      y[0] = o.t.x();
      y[1] = o.t.y();
      y[2] = o.t.z();
      y[3] = o.scale;
      y[4] = o.yaw;
      if (cfg_.observe_dims) {
        y[5] = o.width;
        y[6] = o.height;
        y[7] = o.length;
      }
      TrackState& t = tracks_[i];
      t = kalman_update(t, y, H, R);
      t.age += 1;
      t.hits += 1;
      t.z_ema = ema_update(t.z_ema, o.latents, t.age);
      t.status = TrackStatus::kTracked;
      t.lost_count = 0;
      t.last_score = score(i, j);
      track_matched[i] = 1;
      obs_matched[j] = 1;
    }
  }

  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    if (track_matched[i]) continue;
    tracks_[i].status = TrackStatus::kLost;
    tracks_[i].lost_count += 1;
  }

  for (std::size_t j = 0; j < observations.size(); ++j) {
    if (obs_matched[j]) continue;
    const Observation& o = observations[j];
    TrackState t;
    t.id = next_id_++;
    t.x[kX] = o.t.x();
    t.x[kY] = o.t.y();
    t.x[kZ] = o.t.z();
    t.x[kS] = o.scale;
    t.x[kPsi] = wrap_angle(o.yaw);
    t.x[kW] = o.width;
    t.x[kH] = o.height;
    t.x[kL] = o.length;
    Vec11 p0;
    p0 << cfg_.p0, cfg_.p0, cfg_.p0, cfg_.p0, cfg_.p0, cfg_.p0, cfg_.p0,
        cfg_.p0, cfg_.p0_velocity, cfg_.p0_velocity, cfg_.p0_velocity;
    t.P = p0.asDiagonal();
    t.z_ema = o.latents;
    t.age = 1;
    t.hits = 1;
    t.status = TrackStatus::kTracked;
    t.last_score = o.score;
    tracks_.push_back(std::move(t));
    pending_.push_back({});
  }
  if (pending_.size() < tracks_.size()) {
    pending_.resize(tracks_.size());
  }

  // Lifecycle: expired or out-of-frustum tracks disappear along with any
  // unconfirmed buffered records.
  std::vector<TrackState> kept;
  std::vector<std::vector<TrackRecord>> kept_pending;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const TrackState& t = tracks_[i];
    if (t.lost_count > cfg_.affinity.n_life) continue;
    if (cfg_.frustum) {
      const Eigen::Vector4d world(t.x[kX], t.x[kY], t.x[kZ], 1.0);
      const Vec3 in_cam =
          (cfg_.frustum->pose.inverse_matrix() * world).head<3>();
      const ProjectedPoint c = project_point(*cfg_.frustum, in_cam);
      if (c.behind || c.u < 0.0 || c.u >= cfg_.frustum->width || c.v < 0.0 ||
          c.v >= cfg_.frustum->height) {
        continue;
      }
    }
    kept.push_back(t);
    kept_pending.push_back(std::move(pending_[i]));
  }
  tracks_ = std::move(kept);
  pending_ = std::move(kept_pending);

  // Emission with confirmation: young tracks buffer records and flush them
  // retroactively once min_hits is reached.
  std::vector<TrackRecord> emitted;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    TrackState& t = tracks_[i];
    TrackRecord rec = record_for(t, frame);
    if (t.hits >= cfg_.min_hits) {
      if (!pending_[i].empty()) {
        for (TrackRecord& old : pending_[i]) {
          old.score = t.last_score;  // confirmed confidence
          emitted.push_back(std::move(old));
        }
        pending_[i].clear();
      }
      emitted.push_back(std::move(rec));
    } else {
      pending_[i].push_back(std::move(rec));
    }
  }
  return emitted;
}

}  // namespace irt
