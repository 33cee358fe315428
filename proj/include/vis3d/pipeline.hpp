#pragma once

// Causal per-frame update loop: visibility -> prediction -> association ->
// EKF/PMF updates -> initialization -> scale priors -> merge -> lifecycle.

#include "vis3d/io.hpp"

namespace vis3d {

struct StepStats {
  int associated = 0;
  int initialized = 0;
  int deferred = 0;
  int rejected_by_scale = 0;
  int gated_updates = 0;
};

class SemanticMapper {
 public:
  SemanticMapper(CategorySet categories, FilterConfig cfg) : categories_(std::move(categories)), cfg_(cfg) {}

  /// Processes one frame and returns the reported (confirmed) objects.
  FrameSnapshot step(const FrameInput& in) {
    stats_ = {};
    const int f = in.frame;
    const Intrinsics& K = in.intrinsics;
    const RigidPose& g = in.pose;

    update_visibility(K, g);

    for (ObjectHypothesis& obj : objects_)
      if (obj.memory == Memory::ShortTerm && obj.status.visible()) predict(obj, categories_);

    const BoxPredictions predictions = predict_boxes(objects_, K, g, cfg_);
    const Assignment assignment = gate_and_assign(predictions, in.detections, categories_, cfg_);

    std::vector<bool> associated(objects_.size(), false);
    for (const AssignedPair& pair : assignment.pairs) {
      const std::size_t idx = index_of(pair.object_id);
      ObjectHypothesis& obj = objects_[idx];
      const Detection& det = in.detections[static_cast<std::size_t>(pair.detection)];
      for (auto& entry : obj.bank) {
        const auto r = measurement_update(obj, entry.first, det.box, pair.weight, K, g, cfg_);
        if (r == MeasurementOutcome::GatedOut) ++stats_.gated_updates;
      }
      pmf_update(obj, det.scores, cfg_.score_floor);
      obj.hits += 1;
      obj.last_seen = f;
      obj.missed = 0;
      associated[idx] = true;
      ++stats_.associated;
    }

    for (std::size_t i = 0; i < objects_.size(); ++i) {
      ObjectHypothesis& obj = objects_[i];
      if (obj.memory != Memory::ShortTerm || !obj.status.visible()) continue;
      obj.last_visible = f;
      if (!associated[i]) ++obj.missed;
    }

    // Periodic scale-prior pseudo-measurement on objects measured this frame.
    if (cfg_.scale_prior_every > 0 && f % cfg_.scale_prior_every == 0) {
      std::vector<ObjectHypothesis> kept;
      kept.reserve(objects_.size());
      for (std::size_t i = 0; i < objects_.size(); ++i) {
        ObjectHypothesis& obj = objects_[i];
        if (associated[i] && apply_scale_prior(obj, categories_, cfg_).rejected) {
          ++stats_.rejected_by_scale;
          continue;
        }
        kept.push_back(std::move(obj));
      }
      objects_ = std::move(kept);
    }
    for (ObjectHypothesis& obj : objects_)
      if (obj.last_seen == f) maybe_terminate_bank(obj, cfg_);

    for (int j : assignment.unassigned_detections) {
      const Detection& det = in.detections[static_cast<std::size_t>(j)];
      InitResult init = initialize_object(det, in.points, K, g, categories_, next_id_, f);
      if (init.status == InitStatus::TooFewPoints) ++stats_.deferred;
      if (!init.object) continue;
      ObjectHypothesis& obj = *init.object;
      if (apply_scale_prior(obj, categories_, cfg_).rejected) {
        ++stats_.rejected_by_scale;
        continue;
      }
      maybe_terminate_bank(obj, cfg_);
      ++next_id_;
      ++stats_.initialized;
      objects_.push_back(std::move(obj));
    }

    objects_ = merge_pass(std::move(objects_), cfg_);
    objects_ = lifecycle_pass(std::move(objects_), f, cfg_);
    return snapshot(f);
  }

  FrameSnapshot snapshot(int frame) const {
    FrameSnapshot snap;
    snap.frame = frame;
    for (const ObjectHypothesis& obj : objects_) {
      if (!obj.confirmed(cfg_)) continue;
      const PointEstimate est = point_estimate(obj);
      snap.objects.push_back({obj.id, categories_[static_cast<std::size_t>(est.category)].name, est.confidence,
                              est.cuboid, obj.status.kind, obj.memory});
    }
    return snap;
  }

  const std::vector<ObjectHypothesis>& objects() const { return objects_; }
  std::vector<ObjectHypothesis>& mutable_objects() { return objects_; }
  const StepStats& last_stats() const { return stats_; }
  const FilterConfig& config() const { return cfg_; }
  const CategorySet& categories() const { return categories_; }

 private:
  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < objects_.size(); ++i)
      if (objects_[i].id == id) return i;
    throw std::logic_error("unknown object id");
  }

  /// Predicted visibility of every object against the confirmed others.
  void update_visibility(const Intrinsics& K, const RigidPose& g) {
    std::vector<Cuboid> cuboids;
    std::vector<std::size_t> owners;
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (!objects_[i].confirmed(cfg_)) continue;
      cuboids.push_back(objects_[i].map_cuboid());
      owners.push_back(i);
    }
    std::vector<Cuboid> others;
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      others.clear();
      for (std::size_t c = 0; c < cuboids.size(); ++c)
        if (owners[c] != i) others.push_back(cuboids[c]);
      objects_[i].status = visibility_status(objects_[i].map_cuboid(), others, K, g, cfg_.visibility);
    }
  }

  CategorySet categories_;
  FilterConfig cfg_;
  std::vector<ObjectHypothesis> objects_;
  int next_id_ = 0;
  StepStats stats_;
};

}  // namespace vis3d
