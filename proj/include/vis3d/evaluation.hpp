#pragma once

// Frame-by-frame 3D detection scoring: true positives, misses and false
// alarms over a grid of position x orientation thresholds, aggregated into
// precision and recall.

#include "vis3d/io.hpp"

#include <set>

namespace vis3d {

struct Estimate {
  int id = 0;
  std::string category;
  Cuboid cuboid;
  double confidence = 0.0;
};

struct GtInstance {
  int id = 0;
  std::string category;
  Cuboid cuboid;
};

struct FrameMatch {
  int tp = 0, fp = 0, fn = 0;
  std::vector<std::pair<int, int>> pairs;  // (gt id, estimate id)
};

struct MatchOptions {
  bool fold_yaw = false;  // treat yaw and yaw + pi as equal
};

inline double yaw_error(double a, double b, bool fold) {
  const double d = angular_distance(a, b);
  return fold ? std::min(d, kPi - d) : d;
}

/// A ground-truth object is a true positive if a same-category estimate
/// lies within pos_thr (center distance) and ang_thr (yaw error; ignored when
/// nullopt). Pairs are taken nearest first, each side at most once; ties go
/// to the lower gt id, then the lower estimate id.
inline FrameMatch match_frame(std::span<const Estimate> estimates, std::span<const GtInstance> gt, double pos_thr,
                              std::optional<double> ang_thr, const MatchOptions& opt = {}) {
  struct Cand {
    double dist;
    int gt_id, est_id;
    std::size_t gi, ei;
  };
  std::vector<Cand> cands;
  for (std::size_t gi = 0; gi < gt.size(); ++gi) {
    for (std::size_t ei = 0; ei < estimates.size(); ++ei) {
      if (estimates[ei].category != gt[gi].category) continue;
      const double d = (estimates[ei].cuboid.center - gt[gi].cuboid.center).norm();
      if (!(d <= pos_thr)) continue;
      if (ang_thr && !(yaw_error(estimates[ei].cuboid.yaw, gt[gi].cuboid.yaw, opt.fold_yaw) <= *ang_thr)) continue;
      cands.push_back({d, gt[gi].id, estimates[ei].id, gi, ei});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
    return a.est_id < b.est_id;
  });
  std::vector<bool> gt_used(gt.size()), est_used(estimates.size());
  FrameMatch out;
  for (const Cand& c : cands) {
    if (gt_used[c.gi] || est_used[c.ei]) continue;
    gt_used[c.gi] = est_used[c.ei] = true;
    out.pairs.emplace_back(c.gt_id, c.est_id);
  }
  out.tp = static_cast<int>(out.pairs.size());
  out.fn = static_cast<int>(gt.size()) - out.tp;
  out.fp = static_cast<int>(estimates.size()) - out.tp;
  return out;
}

struct EvalThresholds {
  std::vector<double> position{0.5, 1.0, 1.5};
  std::vector<std::optional<double>> orientation{30.0 * kPi / 180.0, 45.0 * kPi / 180.0, std::nullopt};
};

struct EvalCell {
  double position = 0;
  std::optional<double> orientation;
  long tp = 0, fp = 0, fn = 0;

  bool precision_defined() const { return tp + fp > 0; }
  double precision() const { return precision_defined() ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  bool recall_defined() const { return tp + fn > 0; }
  double recall() const { return recall_defined() ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
};

/// Cells in row-major order: one row per orientation threshold, one column
/// per position threshold.
struct EvalRecord {
  EvalThresholds thresholds;
  std::vector<EvalCell> cells;
  long frames = 0;

  const EvalCell& cell(std::size_t orientation_idx, std::size_t position_idx) const {
    return cells.at(orientation_idx * thresholds.position.size() + position_idx);
  }
  EvalCell& cell(std::size_t orientation_idx, std::size_t position_idx) {
    return cells.at(orientation_idx * thresholds.position.size() + position_idx);
  }
};

inline EvalRecord empty_record(const EvalThresholds& th) {
  EvalRecord r;
  r.thresholds = th;
  for (const auto& a : th.orientation)
    for (double p : th.position) r.cells.push_back({p, a});
  return r;
}

/// Per-frame results, one FrameMatch per cell in EvalRecord order.
using FrameCells = std::vector<FrameMatch>;

inline FrameCells match_all_cells(std::span<const Estimate> est, std::span<const GtInstance> gt,
                                  const EvalThresholds& th, const MatchOptions& opt = {}) {
  FrameCells out;
  for (const auto& a : th.orientation)
    for (double p : th.position) out.push_back(match_frame(est, gt, p, a, opt));
  return out;
}

inline EvalRecord aggregate(const EvalThresholds& th, std::span<const FrameCells> frames) {
  EvalRecord r = empty_record(th);
  for (const FrameCells& f : frames) {
    if (f.size() != r.cells.size()) throw std::invalid_argument("aggregate: cell count mismatch");
    for (std::size_t c = 0; c < f.size(); ++c) {
      r.cells[c].tp += f[c].tp;
      r.cells[c].fp += f[c].fp;
      r.cells[c].fn += f[c].fn;
    }
    ++r.frames;
  }
  return r;
}

inline std::string orientation_label(const std::optional<double>& a) {
  if (!a) return "none";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gdeg", *a * 180.0 / kPi);
  return buf;
}

inline std::string position_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%gm", p);
  return buf;
}

/// One row per orientation threshold; tp, precision and recall per
/// position threshold.
inline std::string render_csv(const EvalRecord& r) {
  std::string s = "orientation";
  for (double p : r.thresholds.position) {
    const std::string l = position_label(p);
    s += ",tp@" + l + ",fp@" + l + ",fn@" + l + ",precision@" + l + ",recall@" + l;
  }
  s += '\n';
  char buf[64];
  for (std::size_t a = 0; a < r.thresholds.orientation.size(); ++a) {
    s += orientation_label(r.thresholds.orientation[a]);
    for (std::size_t p = 0; p < r.thresholds.position.size(); ++p) {
      const EvalCell& c = r.cell(a, p);
      std::snprintf(buf, sizeof buf, ",%ld,%ld,%ld,%.4f,%.4f", c.tp, c.fp, c.fn, c.precision(), c.recall());
      s += buf;
    }
    s += '\n';
  }
  return s;
}

inline std::string render_table(const EvalRecord& r) {
  std::string s;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s", "orientation");
  s += buf;
  for (double p : r.thresholds.position) {
    std::snprintf(buf, sizeof buf, " | %-26s", ("< " + position_label(p)).c_str());
    s += buf;
  }
  s += "\n";
  std::snprintf(buf, sizeof buf, "%-12s", "");
  s += buf;
  for (std::size_t p = 0; p < r.thresholds.position.size(); ++p) s += " |    #TP  precision  recall";
  s += "\n";
  for (std::size_t a = 0; a < r.thresholds.orientation.size(); ++a) {
    std::snprintf(buf, sizeof buf, "%-12s", orientation_label(r.thresholds.orientation[a]).c_str());
    s += buf;
    for (std::size_t p = 0; p < r.thresholds.position.size(); ++p) {
      const EvalCell& c = r.cell(a, p);
      std::snprintf(buf, sizeof buf, " | %6ld  %9.2f  %6.2f", c.tp, c.precision(), c.recall());
      s += buf;
    }
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Estimate selection from a state log

inline Estimate to_estimate(const ObjectSnapshot& o) { return {o.id, o.category, o.cuboid, o.confidence}; }

/// Causal estimates of one snapshot: every reported object predicted visible.
inline std::vector<Estimate> inst_estimates(const FrameSnapshot& snap) {
  std::vector<Estimate> out;
  for (const ObjectSnapshot& o : snap.objects)
    if (o.status == VisibilityKind::Visible) out.push_back(to_estimate(o));
  return out;
}

inline std::vector<Estimate> inst_estimates(std::span<const FrameSnapshot> log, int frame) {
  for (const FrameSnapshot& s : log)
    if (s.frame == frame) return inst_estimates(s);
  throw std::out_of_range("state log has no frame " + std::to_string(frame));
}

/// Final estimates: each object's state at the last frame it was visible,
/// substituted at every frame where it was visible.
inline std::map<int, std::vector<Estimate>> fnl_estimates(std::span<const FrameSnapshot> log) {
  std::map<int, ObjectSnapshot> last;
  for (const FrameSnapshot& s : log)
    for (const ObjectSnapshot& o : s.objects)
      if (o.status == VisibilityKind::Visible) last[o.id] = o;
  std::map<int, std::vector<Estimate>> out;
  for (const FrameSnapshot& s : log) {
    auto& frame_est = out[s.frame];
    for (const ObjectSnapshot& o : s.objects)
      if (o.status == VisibilityKind::Visible) frame_est.push_back(to_estimate(last.at(o.id)));
  }
  return out;
}

enum class EvalMode { Inst, Fnl };

/// Visible ground truth per frame from the visibility oracle.
inline std::map<int, std::vector<GtInstance>> visible_ground_truth(std::span<const GroundTruthObject> gt,
                                                                   std::span<const VisibilityRecord> vis) {
  std::map<int, const GroundTruthObject*> by_id;
  for (const auto& o : gt) by_id[o.id] = &o;
  std::map<int, std::vector<GtInstance>> out;
  for (const VisibilityRecord& r : vis) {
    auto& frame_gt = out[r.frame];
    if (!r.status.visible()) continue;
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) throw std::out_of_range("visibility record for unknown object " + std::to_string(r.id));
    frame_gt.push_back({it->second->id, it->second->category, it->second->cuboid});
  }
  return out;
}

/// Scores a state log against ground truth over every frame of the
/// visibility oracle.
inline EvalRecord evaluate_log(std::span<const FrameSnapshot> log, std::span<const GroundTruthObject> gt,
                               std::span<const VisibilityRecord> vis, EvalMode mode, const EvalThresholds& th = {},
                               const MatchOptions& opt = {}) {
  const auto gt_frames = visible_ground_truth(gt, vis);
  std::map<int, std::vector<Estimate>> fnl;
  std::map<int, const FrameSnapshot*> by_frame;
  if (mode == EvalMode::Fnl) fnl = fnl_estimates(log);
  for (const FrameSnapshot& s : log) by_frame[s.frame] = &s;
  std::vector<FrameCells> per_frame;
  for (const auto& [frame, gts] : gt_frames) {
    std::vector<Estimate> est;
    if (mode == EvalMode::Inst) {
      const auto it = by_frame.find(frame);
      if (it == by_frame.end()) throw std::out_of_range("state log has no frame " + std::to_string(frame));
      est = inst_estimates(*it->second);
    } else {
      const auto it = fnl.find(frame);
      if (it == fnl.end()) throw std::out_of_range("state log has no frame " + std::to_string(frame));
      est = it->second;
    }
    per_frame.push_back(match_all_cells(est, gts, th, opt));
  }
  return aggregate(th, per_frame);
}

}  // namespace vis3d
