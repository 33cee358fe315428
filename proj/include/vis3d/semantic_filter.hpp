#pragma once

// Per-object posterior: a probability mass over categories times a bank of
// category-conditional EKFs, plus the object lifecycle (scale priors,
// dominance pruning, merging, deletion and memory tiers).

#include "vis3d/ekf.hpp"

#include <map>
#include <string>
#include <vector>

namespace vis3d {

struct CategoryModel {
  int id = 0;
  std::string name;
  Vec3 log_dims_mean = Vec3::Zero();
  Mat3 log_dims_cov = Mat3::Identity() * 0.04;
  StateCov process_noise = StateCov::Zero();
  double score_gate = 0.3;
  StateCov init_cov = StateCov::Identity();
};

/// Categories indexed by id; ids are 0..K-1 in order.
using CategorySet = std::vector<CategoryModel>;

struct FilterConfig {
  double tau_dom = 0.95;
  double tau_merge = 0.3;
  int confirm_hits = 3;
  int coast_frames = 5;
  int longterm_frames = 30;
  double pixel_noise_base = 4.0;
  double pixel_noise_rel = 0.05;
  double chi2_gate = 13.28;      // 4 dof, 0.99
  double score_floor = 1e-3;
  double min_weight = 1e-3;      // floor on measurement weights
  int scale_prior_every = 10;    // frames between scale-prior pseudo-measurements
  double scale_gate = 16.27;     // 3 dof, 0.999; bank entries beyond it are dropped
  VisibilityParams visibility;
};

enum class Memory { ShortTerm, LongTerm };

struct ObjectHypothesis {
  int id = 0;
  std::vector<double> pmf;           // length K
  std::map<int, EkfState> bank;      // category id -> state
  Visibility status;
  Memory memory = Memory::ShortTerm;
  int hits = 0;
  int last_seen = 0;                 // last associated frame
  int born = 0;
  int last_visible = 0;              // last frame predicted Visible
  int missed = 0;                    // consecutive Visible frames without association

  int map_category() const {
    int best = 0;
    for (int k = 1; k < static_cast<int>(pmf.size()); ++k)
      if (pmf[k] > pmf[best]) best = k;
    return best;
  }
  const EkfState& map_state() const { return bank.at(map_category()); }
  Cuboid map_cuboid() const { return map_state().cuboid(); }
  bool confirmed(const FilterConfig& cfg) const { return hits >= cfg.confirm_hits; }

  friend bool operator==(const ObjectHypothesis& a, const ObjectHypothesis& b) {
    if (a.id != b.id || a.pmf != b.pmf || a.status != b.status || a.memory != b.memory || a.hits != b.hits ||
        a.last_seen != b.last_seen || a.born != b.born || a.last_visible != b.last_visible || a.missed != b.missed ||
        a.bank.size() != b.bank.size())
      return false;
    for (auto ia = a.bank.begin(), ib = b.bank.begin(); ia != a.bank.end(); ++ia, ++ib)
      if (ia->first != ib->first || ia->second.mean != ib->second.mean || ia->second.cov != ib->second.cov) return false;
    return true;
  }
};

/// Identity dynamics: objects are static, only the process noise diffuses.
inline void predict(ObjectHypothesis& obj, const CategorySet& categories) {
  for (auto& [k, s] : obj.bank) s.cov += categories.at(k).process_noise;
}

enum class MeasurementOutcome { Updated, GatedOut, NotProjectable, ZeroWeight };

inline double pixel_sigma(const PixelBox& predicted, const FilterConfig& cfg) {
  return cfg.pixel_noise_base + cfg.pixel_noise_rel * predicted.diagonal();
}

/// Box measurement noise for a predicted box at unit weight.
inline Mat4 box_noise(const PixelBox& predicted, const FilterConfig& cfg) {
  const double s = pixel_sigma(predicted, cfg);
  return Mat4::Identity() * (s * s);
}

/// EKF update of category k with an associated detection box. Low weights
/// inflate the measurement noise by 1 / max(weight, min_weight).
inline MeasurementOutcome measurement_update(ObjectHypothesis& obj, int k, const PixelBox& box, double weight,
                                             const Intrinsics& K, const RigidPose& g, const FilterConfig& cfg) {
  if (!(weight > 0.0)) return MeasurementOutcome::ZeroWeight;
  EkfState& s = obj.bank.at(k);
  const auto pred = predict_box(K, g, s.mean);
  if (!pred) return MeasurementOutcome::NotProjectable;
  const Mat4 R = box_noise(pred->box, cfg) / std::max(weight, cfg.min_weight);
  const Vec4 innovation = box.vector() - pred->box.vector();
  const KalmanResult r = kalman_update<4>(s, innovation, pred->jacobian, R, cfg.chi2_gate);
  return r.accepted ? MeasurementOutcome::Updated : MeasurementOutcome::GatedOut;
}

enum class PmfOutcome { Updated, NotVisible, Degenerate };

/// Multiplies the category PMF by detection likelihoods. A missing score
/// vector means the object was not visible: the likelihood is uniform.
inline PmfOutcome pmf_update(ObjectHypothesis& obj, const std::optional<Eigen::VectorXd>& scores,
                             double score_floor = 1e-3) {
  if (!scores) return PmfOutcome::NotVisible;
  std::vector<double> next(obj.pmf.size());
  double total = 0;
  for (std::size_t k = 0; k < obj.pmf.size(); ++k) {
    const double sk = k < static_cast<std::size_t>(scores->size()) ? (*scores)[static_cast<Eigen::Index>(k)] : 0.0;
    next[k] = obj.pmf[k] * std::max(sk, score_floor);
    total += next[k];
  }
  if (!(total > 0.0) || !std::isfinite(total)) return PmfOutcome::Degenerate;
  for (double& p : next) p /= total;
  obj.pmf = std::move(next);
  return PmfOutcome::Updated;
}

/// Log density of the state's log-dims under a category's scale prior,
/// widened by the state's own dimension uncertainty.
inline double scale_prior_log_likelihood(const EkfState& s, const CategoryModel& model, double* mahalanobis2 = nullptr) {
  const Vec3 r = s.mean.tail<3>() - model.log_dims_mean;
  const Mat3 S = model.log_dims_cov + s.cov.block<3, 3>(kLogDims, kLogDims);
  const Eigen::LLT<Mat3> llt(S);
  const double m2 = r.dot(llt.solve(r));
  if (mahalanobis2) *mahalanobis2 = m2;
  const Mat3 L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (m2 + log_det + 3.0 * std::log(2.0 * kPi));
}

struct ScalePriorOutcome {
  bool rejected = false;          // every bank entry failed the scale gate
  std::vector<int> dropped;       // categories removed by the gate
};

/// Scale prior as a pseudo-measurement on the log-dims of every bank entry,
/// plus reweighting of the PMF by the prior density. Entries whose dims are
/// implausible under their category (beyond cfg.scale_gate) are dropped.
inline ScalePriorOutcome apply_scale_prior(ObjectHypothesis& obj, const CategorySet& categories,
                                           const FilterConfig& cfg) {
  ScalePriorOutcome out;
  std::vector<double> log_w(obj.pmf.size(), -std::numeric_limits<double>::infinity());
  Eigen::Matrix<double, 3, kStateDim> H = Eigen::Matrix<double, 3, kStateDim>::Zero();
  H.rightCols<3>().setIdentity();

  for (auto it = obj.bank.begin(); it != obj.bank.end();) {
    const CategoryModel& model = categories.at(it->first);
    double m2 = 0;
    const double ll = scale_prior_log_likelihood(it->second, model, &m2);
    if (!(m2 <= cfg.scale_gate) || !(obj.pmf[it->first] > 0.0)) {
      out.dropped.push_back(it->first);
      it = obj.bank.erase(it);
      continue;
    }
    log_w[it->first] = std::log(obj.pmf[it->first]) + ll;
    const Vec3 innovation = model.log_dims_mean - it->second.mean.tail<3>();
    kalman_update<3>(it->second, innovation, H, model.log_dims_cov);
    ++it;
  }
  if (obj.bank.empty()) {
    out.rejected = true;
    return out;
  }
  const double top = *std::max_element(log_w.begin(), log_w.end());
  double total = 0;
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    obj.pmf[k] = obj.bank.count(static_cast<int>(k)) ? std::exp(log_w[k] - top) : 0.0;
    total += obj.pmf[k];
  }
  for (double& p : obj.pmf) p /= total;
  return out;
}

/// Drops every filter but the dominant category once it exceeds tau_dom.
inline void maybe_terminate_bank(ObjectHypothesis& obj, const FilterConfig& cfg) {
  const int best = obj.map_category();
  if (obj.pmf[best] < cfg.tau_dom) return;
  for (auto it = obj.bank.begin(); it != obj.bank.end();) it = it->first == best ? std::next(it) : obj.bank.erase(it);
  std::fill(obj.pmf.begin(), obj.pmf.end(), 0.0);
  obj.pmf[best] = 1.0;
}

namespace detail {

inline bool older(const ObjectHypothesis& a, const ObjectHypothesis& b) {
  return a.born != b.born ? a.born < b.born : a.id < b.id;
}

inline ObjectHypothesis merge_pair(const ObjectHypothesis& keep, const ObjectHypothesis& drop) {
  ObjectHypothesis out = keep;
  out.bank.clear();
  double total = 0;
  for (std::size_t k = 0; k < out.pmf.size(); ++k) {
    const int kk = static_cast<int>(k);
    const auto a = keep.bank.find(kk), b = drop.bank.find(kk);
    if (a == keep.bank.end() || b == drop.bank.end()) {
      out.pmf[k] = 0.0;
      continue;
    }
    out.pmf[k] = keep.pmf[k] * drop.pmf[k];
    if (out.pmf[k] > 0.0) out.bank.emplace(kk, fuse_states(a->second, b->second));
    else out.pmf[k] = 0.0;
    total += out.pmf[k];
  }
  if (!(total > 0.0)) return keep;  // no common category with mass
  for (double& p : out.pmf) p /= total;
  out.last_seen = std::max(keep.last_seen, drop.last_seen);
  out.last_visible = std::max(keep.last_visible, drop.last_visible);
  out.born = std::min(keep.born, drop.born);
  out.hits = std::min(keep.hits + drop.hits, out.last_seen - out.born + 1);
  out.missed = std::min(keep.missed, drop.missed);
  if (drop.memory == Memory::ShortTerm) out.memory = Memory::ShortTerm;
  return out;
}

}  // namespace detail

/// Repeatedly merges the most overlapping pair of non-occluded objects that
/// share their MAP category, until no pair reaches tau_merge. The older
/// object's id survives. Objects are processed in id order so the result
/// does not depend on the input order.
inline std::vector<ObjectHypothesis> merge_pass(std::vector<ObjectHypothesis> objects, const FilterConfig& cfg) {
  std::sort(objects.begin(), objects.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (;;) {
    double best_iou = -1;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      if (objects[i].status.occluded()) continue;
      const int ci = objects[i].map_category();
      const Cuboid a = objects[i].map_cuboid();
      for (std::size_t j = i + 1; j < objects.size(); ++j) {
        if (objects[j].status.occluded() || objects[j].map_category() != ci) continue;
        const double iou = oriented_overlap_3d(a, objects[j].map_cuboid());
        if (iou >= cfg.tau_merge && iou > best_iou) {
          best_iou = iou;
          bi = i;
          bj = j;
        }
      }
    }
    if (best_iou < 0) break;
    const bool i_older = detail::older(objects[bi], objects[bj]);
    const ObjectHypothesis& keep = i_older ? objects[bi] : objects[bj];
    const ObjectHypothesis& drop = i_older ? objects[bj] : objects[bi];
    ObjectHypothesis merged = detail::merge_pair(keep, drop);
    const std::size_t keep_idx = i_older ? bi : bj;
    const std::size_t drop_idx = i_older ? bj : bi;
    objects[keep_idx] = std::move(merged);
    objects.erase(objects.begin() + static_cast<std::ptrdiff_t>(drop_idx));
  }
  return objects;
}

/// Deletion and memory-tier transitions. Expects statuses and the `missed`
/// counters to be current for `frame`.
inline std::vector<ObjectHypothesis> lifecycle_pass(std::vector<ObjectHypothesis> objects, int frame,
                                                    const FilterConfig& cfg) {
  std::vector<ObjectHypothesis> out;
  out.reserve(objects.size());
  for (ObjectHypothesis& obj : objects) {
    if (obj.memory == Memory::LongTerm) {
      if (obj.status.visible()) obj.memory = Memory::ShortTerm;
      out.push_back(std::move(obj));
      continue;
    }
    if (obj.status.visible()) {
      if (!obj.confirmed(cfg) && obj.missed >= cfg.coast_frames) continue;
    } else if (frame - obj.last_visible >= cfg.longterm_frames) {
      obj.memory = Memory::LongTerm;
    }
    out.push_back(std::move(obj));
  }
  return out;
}

struct PointEstimate {
  int category = 0;
  Cuboid cuboid;
  double confidence = 0.0;
};

/// MAP category (ties go to the lowest id) and its conditional mean.
inline PointEstimate point_estimate(const ObjectHypothesis& obj) {
  const int k = obj.map_category();
  return {k, obj.bank.at(k).cuboid(), obj.pmf[k]};
}

}  // namespace vis3d
