#include "test_util.hpp"

#include <fstream>

namespace vis3d {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Noise-free two-object scene seen from a camera sliding along x.
SceneConfig two_object_scene() {
  SceneConfig cfg;
  cfg.seed = 3;
  cfg.categories = default_categories();
  cfg.intrinsics = test::default_intrinsics();
  cfg.frames = 20;
  cfg.objects = {{0, "car", {Vec3(0, 8, 0.75), 0.4, Vec3(1.8, 4.2, 1.5)}, true},
                 {5, "chair", {Vec3(-2.5, 5, 0.45), -1.0, Vec3(0.55, 0.55, 0.9)}, true}};
  LineTrajectory tr;
  tr.start = Vec3(-1, 0, 1.2);
  tr.end = Vec3(1, 0, 1.2);
  tr.speed = 1.0;
  tr.look_at = Vec3(-1, 7, 0.5);
  cfg.trajectory = tr;
  return cfg;
}

TEST(BuildScene, ExplicitObjectsAreExactGroundTruth) {
  const World w = build_scene(two_object_scene());
  ASSERT_EQ(w.objects.size(), 2u);
  EXPECT_EQ(w.objects[1].id, 5);
  EXPECT_EQ(w.objects[1].cuboid.center, Vec3(-2.5, 5, 0.45));
  EXPECT_EQ(w.objects[1].cuboid.yaw, -1.0);
  EXPECT_EQ(w.objects[0].cuboid.dims, Vec3(1.8, 4.2, 1.5));
}

TEST(BuildScene, SameSeedSameWorld) {
  SceneConfig cfg = scenario("loop", 11);
  const World a = build_scene(cfg), b = build_scene(cfg);
  ASSERT_EQ(a.objects.size(), b.objects.size());
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    EXPECT_EQ(a.objects[i].cuboid.center, b.objects[i].cuboid.center);
    EXPECT_EQ(a.objects[i].cuboid.dims, b.objects[i].cuboid.dims);
  }
  cfg.seed = 12;
  const World c = build_scene(cfg);
  EXPECT_NE(a.objects[0].cuboid.center, c.objects[0].cuboid.center);
}

TEST(BuildScene, SampledObjectsDoNotOverlap) {
  const World w = build_scene(scenario("loop", 5));
  for (std::size_t i = 0; i < w.objects.size(); ++i)
    for (std::size_t j = i + 1; j < w.objects.size(); ++j)
      EXPECT_EQ(oriented_overlap_3d(w.objects[i].cuboid, w.objects[j].cuboid), 0.0);
}

TEST(BuildScene, SampledDimsFollowCategoryPrior) {
  SceneConfig cfg;
  cfg.categories = default_categories();
  cfg.intrinsics = test::default_intrinsics();
  cfg.frames = 0;
  cfg.sampled = {{"car", 1000, Vec2(-1e4, -1e4), Vec2(1e4, 1e4)}};
  const World w = build_scene(cfg);
  ASSERT_EQ(w.objects.size(), 1000u);
  const CategoryModel& car = cfg.categories[0];
  Vec3 mean = Vec3::Zero();
  for (const auto& o : w.objects) {
    const Vec3 z = o.cuboid.dims.array().log().matrix() - car.log_dims_mean;
    for (int a = 0; a < 3; ++a) EXPECT_LT(std::abs(z[a]), 5 * std::sqrt(car.log_dims_cov(a, a)));
    EXPECT_DOUBLE_EQ(o.cuboid.center.z(), 0.5 * o.cuboid.dims.z());
    mean += z / 1000.0;
  }
  // Sample mean of log dims within 4 standard errors.
  for (int a = 0; a < 3; ++a) EXPECT_LT(std::abs(mean[a]), 4 * std::sqrt(car.log_dims_cov(a, a) / 1000.0));
}

TEST(BuildScene, ImpossiblePlacementThrows) {
  SceneConfig cfg = two_object_scene();
  cfg.sampled = {{"car", 50, Vec2(-1, -1), Vec2(1, 1)}};
  EXPECT_THROW(build_scene(cfg), std::runtime_error);
}

TEST(BuildScene, OverlappingExplicitObjectsThrow) {
  SceneConfig cfg = two_object_scene();
  cfg.objects[1].cuboid.center = cfg.objects[0].cuboid.center;
  EXPECT_THROW(build_scene(cfg), std::invalid_argument);
}

TEST(Scenario, UnknownNameThrows) { EXPECT_THROW(scenario("nope"), std::invalid_argument); }

TEST(RenderFrame, NoiseFreeBoxesEqualProjection) {
  const World w = build_scene(two_object_scene());
  int seen = 0;
  for (int f = 0; f < w.config.frames; ++f) {
    const RenderedFrame r = render_frame(w, f);
    ASSERT_EQ(r.input.detections.size(), r.detection_source.size());
    for (std::size_t d = 0; d < r.input.detections.size(); ++d) {
      const int src = r.detection_source[d];
      ASSERT_GE(src, 0);
      const auto& obj = src == 0 ? w.objects[0] : w.objects[1];
      const auto box = project_cuboid(w.config.intrinsics, r.true_pose, obj.cuboid);
      ASSERT_TRUE(box);
      EXPECT_LT((r.input.detections[d].box.vector() - box->vector()).norm(), 1e-9);
      // Identity confusion without concentration gives one-hot scores.
      const int k = w.category_id(obj.category);
      EXPECT_EQ(r.input.detections[d].scores[k], 1.0);
      EXPECT_EQ(r.input.detections[d].scores.sum(), 1.0);
      ++seen;
    }
  }
  EXPECT_GT(seen, 0);
}

TEST(RenderFrame, PointsLieOnFacesOrGround) {
  const World w = build_scene(two_object_scene());
  const RenderedFrame r = render_frame(w, 7);
  ASSERT_FALSE(r.input.points.empty());
  for (const Vec3& X : r.input.points) {
    bool on_surface = std::abs(X.z()) < 1e-12;
    for (const auto& o : w.objects) {
      const Vec3 local = yaw_rotation(o.cuboid.yaw).transpose() * (X - o.cuboid.center);
      const Vec3 half = 0.5 * o.cuboid.dims;
      const bool inside = (local.cwiseAbs() - half).maxCoeff() < 1e-9;
      const bool on_face = ((local.cwiseAbs() - half).cwiseAbs().array() < 1e-9).any();
      on_surface = on_surface || (inside && on_face);
    }
    EXPECT_TRUE(on_surface) << X.transpose();
  }
}

TEST(RenderFrame, FullyOccludedObjectIsNotDetected) {
  SceneConfig cfg = two_object_scene();
  cfg.objects = {{0, "car", {Vec3(0, 4, 0.75), 0.0, Vec3(4, 1, 3)}, true},
                 {1, "chair", {Vec3(0, 8, 0.45), 0.0, Vec3(0.55, 0.55, 0.9)}, true}};
  LineTrajectory tr;
  tr.start = Vec3(0, 0, 1.0);
  tr.end = Vec3(0.1, 0, 1.0);
  tr.look_at = Vec3(0, 8, 0.45);
  cfg.trajectory = tr;
  const World w = build_scene(cfg);
  for (int f = 0; f < cfg.frames; ++f) {
    const RenderedFrame r = render_frame(w, f);
    EXPECT_TRUE(r.truth[1].occluded());
    for (int src : r.detection_source) EXPECT_NE(src, 1);
  }
}

TEST(RenderFrame, DetectionsIntersectImage) {
  const World w = build_scene(scenario("loop"));
  const PixelBox image = image_rect(w.config.intrinsics);
  for (int f = 0; f < 60; ++f)
    for (const auto& d : render_frame(w, f).input.detections) {
      EXPECT_GT(intersect(d.box, image).area(), 0.0);
      EXPECT_NEAR(d.scores.sum(), 1.0, 1e-9);
      EXPECT_GE(d.scores.minCoeff(), 0.0);
    }
}

TEST(RenderFrame, DetectionAndFalseAlarmRates) {
  SceneConfig cfg = two_object_scene();
  cfg.objects.resize(1);
  cfg.frames = 2000;
  cfg.noise.p_detect = 0.7;
  cfg.noise.false_alarm_rate = 1.5;
  LineTrajectory tr;
  tr.start = Vec3(0, 0, 1.2);
  tr.end = Vec3(0.01, 0, 1.2);
  tr.speed = 1e-3;
  tr.look_at = cfg.objects[0].cuboid.center;
  cfg.trajectory = tr;
  const World w = build_scene(cfg);
  int visible = 0, detected = 0, false_alarms = 0;
  for (int f = 0; f < cfg.frames; ++f) {
    const RenderedFrame r = render_frame(w, f);
    if (r.truth[0].visible()) ++visible;
    for (int src : r.detection_source) (src < 0 ? false_alarms : detected) += 1;
  }
  ASSERT_EQ(visible, cfg.frames);
  const double n = visible, p = cfg.noise.p_detect;
  EXPECT_LT(std::abs(detected - n * p), 3 * std::sqrt(n * p * (1 - p)));
  const double lambda = cfg.noise.false_alarm_rate * cfg.frames;
  EXPECT_LT(std::abs(false_alarms - lambda), 3 * std::sqrt(lambda));
}

TEST(Simulate, SameSeedIdenticalFiles) {
  const fs::path a = fs::temp_directory_path() / "vis3d_sim_a", b = fs::temp_directory_path() / "vis3d_sim_b";
  fs::remove_all(a);
  fs::remove_all(b);
  SceneConfig cfg = scenario("crowd", 9);
  cfg.frames = 30;
  write_simulation(a, simulate(cfg));
  write_simulation(b, simulate(cfg));
  for (const char* f : {"poses.jsonl", "points.jsonl", "detections.jsonl", "gt.jsonl", "visibility.jsonl", "categories.toml"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  const auto cats = read_categories(a / "categories.toml");
  EXPECT_EQ(read_sequence(a, cats.size()).size(), 30u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Scenario, OcclusionHasOneContiguousOccludedInterval) {
  const auto seq = simulate(scenario("occlusion"));
  std::vector<int> occluded;
  for (const auto& v : seq.visibility)
    if (v.id == 1 && v.status.occluded()) occluded.push_back(v.frame);
  ASSERT_GE(occluded.size(), 30u);
  EXPECT_EQ(occluded.back() - occluded.front() + 1, static_cast<int>(occluded.size()));
}

TEST(Scenario, ToycarBothObjectsScoredAsCars) {
  const SceneConfig cfg = scenario("toycar");
  const World w = build_scene(cfg);
  std::array<int, 2> detected{0, 0};
  for (int f = 0; f < cfg.frames; ++f) {
    const RenderedFrame r = render_frame(w, f);
    for (std::size_t d = 0; d < r.detection_source.size(); ++d) {
      const int src = r.detection_source[d];
      if (src < 0) continue;
      if (r.input.detections[d].scores[0] > cfg.categories[0].score_gate) ++detected[static_cast<std::size_t>(src)];
    }
  }
  EXPECT_GT(detected[0], cfg.frames / 2);
  EXPECT_GT(detected[1], cfg.frames / 2);
}

TEST(Scenario, LoopRevisitsEveryObject) {
  const auto seq = simulate(scenario("loop"));
  for (const auto& o : seq.world.objects) {
    int intervals = 0;
    bool prev = false;
    for (const auto& v : seq.visibility) {
      if (v.id != o.id) continue;
      const bool vis = v.status.visible();
      if (vis && !prev) ++intervals;
      prev = vis;
    }
    EXPECT_GE(intervals, 2) << "object " << o.id;
  }
}

TEST(SceneJson, OverridesAndValidation) {
  const nlohmann::json j = nlohmann::json::parse(R"({
    "seed": 4, "frames": 12,
    "intrinsics": {"fx": 300, "fy": 300, "cx": 160, "cy": 120, "width": 320, "height": 240},
    "trajectory": {"type": "line", "start": [0, 0, 1], "end": [1, 0, 1], "speed": 0.5, "look_at": [0, 5, 0]},
    "objects": [{"category": "chair", "center": [0, 5, 0.45], "dims": [0.5, 0.5, 0.9]}],
    "noise": {"sigma_px": 1.5, "confusion": {"diagonal": 0.7}}
  })");
  const SceneConfig cfg = scene_config_from_json(j);
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.frames, 12);
  EXPECT_EQ(cfg.intrinsics.width, 320);
  ASSERT_EQ(cfg.objects.size(), 1u);
  EXPECT_EQ(cfg.objects[0].id, 0);
  EXPECT_DOUBLE_EQ(cfg.noise.confusion(0, 0), 0.7);
  EXPECT_NEAR(cfg.noise.confusion.row(2).sum(), 1.0, 1e-12);
  EXPECT_EQ(simulate(cfg).frames.size(), 12u);

  const nlohmann::json based = nlohmann::json::parse(R"({"scenario": "crowd", "frames": 5})");
  EXPECT_EQ(scene_config_from_json(based).objects.size(), 4u);

  for (const char* bad : {R"({"frames": -1})", R"({"noise": {"p_detect": 1.5}})",
                          R"({"noise": {"confusion": [[1, 0], [0, 1]]}})", R"({"frame_rate": "fast"})",
                          R"({"trajectory": {"type": "spiral"}})"})
    EXPECT_THROW(scene_config_from_json(nlohmann::json::parse(bad)), std::invalid_argument) << bad;
}

}  // namespace
}  // namespace vis3d
