#pragma once

// Top-down box prediction, gating and greedy assignment of detections to
// object hypotheses, and bottom-up initialization of new objects from
// unassigned detections.

#include "vis3d/semantic_filter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace vis3d {

/// One detector output: an image box with unnormalized per-category scores.
/// The optional azimuth is the object's yaw about gravity relative to the
/// camera heading (see camera_heading()).
struct Detection {
  PixelBox box;
  Eigen::VectorXd scores;
  std::optional<double> azimuth;
};

struct PredictedBox {
  int object_id = 0;
  int category = 0;  // MAP category of the object
  PixelBox box;
  Mat4 cov = Mat4::Identity();
};

struct BoxPredictions {
  std::vector<PredictedBox> predicted;
  std::vector<int> skipped_occluded;
};

struct AssignedPair {
  int object_id = 0;
  int detection = 0;
  double weight = 0.0;
  friend bool operator==(const AssignedPair&, const AssignedPair&) = default;
};

struct Assignment {
  std::vector<AssignedPair> pairs;
  std::vector<int> unassigned_detections;
  std::vector<int> skipped_occluded;
};

/// Sloppy 4-D Gaussian over the box of each in-view, unoccluded short-term
/// object: mean = projected MAP cuboid, covariance = H P H' + R.
inline BoxPredictions predict_boxes(const std::vector<ObjectHypothesis>& objects, const Intrinsics& K,
                                    const RigidPose& g, const FilterConfig& cfg) {
  BoxPredictions out;
  for (const ObjectHypothesis& obj : objects) {
    if (obj.memory != Memory::ShortTerm) continue;
    if (obj.status.occluded()) {
      out.skipped_occluded.push_back(obj.id);
      continue;
    }
    if (!obj.status.visible()) continue;
    const int k = obj.map_category();
    const EkfState& s = obj.bank.at(k);
    const auto pred = predict_box(K, g, s.mean);
    if (!pred) continue;
    PredictedBox p;
    p.object_id = obj.id;
    p.category = k;
    p.box = pred->box;
    p.cov = pred->jacobian * s.cov * pred->jacobian.transpose() + box_noise(pred->box, cfg);
    out.predicted.push_back(p);
  }
  return out;
}

/// Log association score of every (prediction, detection) pair: Gaussian
/// log density of the detection box under the prediction plus the log
/// detector score for the object's MAP category. Pairs failing the chi2
/// gate or the category score gate are -inf.
inline Eigen::MatrixXd association_log_scores(const std::vector<PredictedBox>& predicted,
                                              const std::vector<Detection>& detections, const CategorySet& categories,
                                              const FilterConfig& cfg) {
  const double ninf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(predicted.size()),
                                                  static_cast<Eigen::Index>(detections.size()), ninf);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const PredictedBox& p = predicted[i];
    const Eigen::LLT<Mat4> llt(p.cov);
    const Mat4 L = llt.matrixL();
    const double log_norm = -0.5 * (4.0 * std::log(2.0 * kPi)) - L.diagonal().array().log().sum();
    for (std::size_t j = 0; j < detections.size(); ++j) {
      const Detection& d = detections[j];
      const double score = p.category < d.scores.size() ? d.scores[p.category] : 0.0;
      if (!(score >= categories.at(p.category).score_gate) || !(score > 0.0)) continue;
      const Vec4 r = d.box.vector() - p.box.vector();
      const double m2 = r.dot(llt.solve(r));
      if (!(m2 <= cfg.chi2_gate)) continue;
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = log_norm - 0.5 * m2 + std::log(score);
    }
  }
  return out;
}

/// Greedy matching on a score matrix (rows = objects, cols = detections):
/// repeatedly take the best remaining finite entry. Ties go to the lowest
/// detection index, then the lowest row.
inline std::vector<std::pair<int, int>> greedy_match(const Eigen::MatrixXd& scores) {
  struct Cand {
    double s;
    int row, col;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < scores.rows(); ++i)
    for (int j = 0; j < scores.cols(); ++j)
      if (std::isfinite(scores(i, j))) cands.push_back({scores(i, j), i, j});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.s != b.s) return a.s > b.s;
    if (a.col != b.col) return a.col < b.col;
    return a.row < b.row;
  });
  std::vector<bool> row_used(static_cast<std::size_t>(scores.rows())), col_used(static_cast<std::size_t>(scores.cols()));
  std::vector<std::pair<int, int>> out;
  for (const Cand& c : cands) {
    if (row_used[c.row] || col_used[c.col]) continue;
    row_used[c.row] = col_used[c.col] = true;
    out.emplace_back(c.row, c.col);
  }
  return out;
}

inline Assignment gate_and_assign(const BoxPredictions& predictions, const std::vector<Detection>& detections,
                                  const CategorySet& categories, const FilterConfig& cfg) {
  Assignment out;
  out.skipped_occluded = predictions.skipped_occluded;
  const Eigen::MatrixXd scores = association_log_scores(predictions.predicted, detections, categories, cfg);
  std::vector<bool> used(detections.size());
  for (const auto& [row, col] : greedy_match(scores)) {
    const PredictedBox& p = predictions.predicted[static_cast<std::size_t>(row)];
    const double w = std::clamp(detections[static_cast<std::size_t>(col)].scores[p.category], 0.0, 1.0);
    out.pairs.push_back({p.object_id, col, w});
    used[static_cast<std::size_t>(col)] = true;
  }
  for (std::size_t j = 0; j < detections.size(); ++j)
    if (!used[j]) out.unassigned_detections.push_back(static_cast<int>(j));
  return out;
}

/// Weighted centroid of the points projecting inside `box`, with weights
/// exp(-|pi(X) - box center| / sigma). nullopt if fewer than min_points
/// qualify.
inline std::optional<Vec3> weighted_centroid(std::span<const Vec3> points, const PixelBox& box, const Intrinsics& K,
                                             const RigidPose& g, double sigma, int min_points = 3) {
  const Vec2 c = box.center();
  Vec3 acc = Vec3::Zero();
  double wsum = 0;
  int n = 0;
  for (const Vec3& X : points) {
    const auto p = project_point(K, g, X);
    if (!p || !box.contains(*p)) continue;
    const double w = std::exp(-(*p - c).norm() / sigma);
    acc += w * X;
    wsum += w;
    ++n;
  }
  if (n < min_points || !(wsum > 0.0)) return std::nullopt;
  return Vec3(acc / wsum);
}

/// World yaw from a camera-relative azimuth: the azimuth rotation about
/// gravity composed with the camera heading. Without an azimuth the object
/// is taken to face the camera (local +x towards the camera).
inline double init_orientation(const std::optional<double>& azimuth, const RigidPose& g,
                               const Vec3& object_position = Vec3::Zero()) {
  if (azimuth) return wrap_angle(camera_heading(g.rotation) + *azimuth);
  const Vec3 to_cam = g.translation - object_position;
  return wrap_angle(std::atan2(to_cam.y(), to_cam.x()));
}

struct FitScaleResult {
  Vec3 log_dims = Vec3::Zero();
  bool diverged = false;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

/// Gauss-Newton fit of log-dims to a detection box at a fixed position and
/// yaw, regularized by the category scale prior and started at its mean.
inline FitScaleResult fit_scale(const Vec3& position, double yaw, const PixelBox& box, const Intrinsics& K,
                                const RigidPose& g, const CategoryModel& prior, int max_iterations = 15) {
  const Mat3 prior_info = prior.log_dims_cov.inverse();
  const Vec4 z = box.vector();
  StateVec x;
  x << position, yaw, prior.log_dims_mean;

  auto cost = [&](const StateVec& s, Vec4* r, Eigen::Matrix<double, 4, 3>* J) {
    const auto pred = predict_box(K, g, s);
    if (!pred) return std::numeric_limits<double>::infinity();
    const Vec4 res = pred->box.vector() - z;
    const Vec3 dd = s.tail<3>() - prior.log_dims_mean;
    if (r) *r = res;
    if (J) *J = pred->jacobian.rightCols<3>();
    return res.squaredNorm() + dd.dot(prior_info * dd);
  };

  FitScaleResult out;
  Vec4 r;
  Eigen::Matrix<double, 4, 3> J;
  double c = cost(x, &r, &J);
  out.initial_cost = c;
  StateVec best = x;
  double best_cost = c;
  int increases = 0;
  if (!std::isfinite(c)) {
    out.log_dims = prior.log_dims_mean;
    out.diverged = true;
    out.final_cost = c;
    return out;
  }
  for (int it = 0; it < max_iterations; ++it) {
    const Vec3 dd = x.tail<3>() - prior.log_dims_mean;
    const Mat3 A = J.transpose() * J + prior_info;
    const Vec3 b = -(J.transpose() * r + prior_info * dd);
    const Vec3 step = A.ldlt().solve(b);
    if (!step.allFinite()) break;
    ++out.iterations;
    // Backtrack along the Gauss-Newton direction; an iteration that finds no
    // decrease counts as a cost increase.
    StateVec trial = x;
    Vec4 tr;
    Eigen::Matrix<double, 4, 3> tJ;
    double tc = std::numeric_limits<double>::infinity();
    double alpha = 1.0;
    for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
      trial.tail<3>() = x.tail<3>() + alpha * step;
      tc = cost(trial, &tr, &tJ);
      if (tc <= c) break;
    }
    if (!(tc <= c)) {
      if (++increases >= 2) {
        out.log_dims = prior.log_dims_mean;
        out.diverged = true;
        out.final_cost = out.initial_cost;
        return out;
      }
      continue;
    }
    increases = 0;
    const double prev = c;
    x = trial;
    r = tr;
    J = tJ;
    c = tc;
    if (c < best_cost) {
      best_cost = c;
      best = x;
    }
    if (alpha * step.norm() < 1e-10 || prev - c <= 1e-12 * prev) break;
  }
  out.log_dims = best.tail<3>();
  out.final_cost = best_cost;
  return out;
}

enum class InitStatus { Created, BelowGate, TooFewPoints };

struct InitResult {
  InitStatus status = InitStatus::BelowGate;
  std::optional<ObjectHypothesis> object;
};

/// Bottom-up proposal: one EKF per category whose score passes its gate,
/// positioned at the weighted centroid of in-box points.
inline InitResult initialize_object(const Detection& det, std::span<const Vec3> points, const Intrinsics& K,
                                    const RigidPose& g, const CategorySet& categories, int id, int frame,
                                    int min_points = 3) {
  InitResult out;
  std::vector<int> cats;
  for (const CategoryModel& m : categories)
    if (m.id < det.scores.size() && det.scores[m.id] >= m.score_gate && det.scores[m.id] > 0.0) cats.push_back(m.id);
  if (cats.empty()) return out;

  const auto position = weighted_centroid(points, det.box, K, g, det.box.diagonal() / 4.0, min_points);
  if (!position) {
    out.status = InitStatus::TooFewPoints;
    return out;
  }
  const double yaw = init_orientation(det.azimuth, g, *position);

  ObjectHypothesis obj;
  obj.id = id;
  obj.born = obj.last_seen = obj.last_visible = frame;
  obj.hits = 1;
  obj.status = {VisibilityKind::Visible, 0.0};
  obj.pmf.assign(categories.size(), 0.0);
  double total = 0;
  for (int k : cats) {
    const CategoryModel& m = categories[static_cast<std::size_t>(k)];
    const FitScaleResult fit = fit_scale(*position, yaw, det.box, K, g, m);
    EkfState s;
    s.mean << *position, yaw, fit.log_dims;
    s.cov = m.init_cov;
    obj.bank.emplace(k, s);
    obj.pmf[static_cast<std::size_t>(k)] = det.scores[k];
    total += det.scores[k];
  }
  for (double& p : obj.pmf) p /= total;
  out.status = InitStatus::Created;
  out.object = std::move(obj);
  return out;
}

}  // namespace vis3d
