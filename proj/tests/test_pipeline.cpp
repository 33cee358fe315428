#include "test_util.hpp"

namespace vis3d {
namespace {

std::vector<FrameSnapshot> run(const SimulatedSequence& seq, const FilterConfig& cfg = {}, std::size_t frames = SIZE_MAX) {
  SemanticMapper mapper(seq.world.config.categories, cfg);
  std::vector<FrameSnapshot> log;
  for (std::size_t i = 0; i < std::min(frames, seq.frames.size()); ++i) log.push_back(mapper.step(seq.frames[i]));
  return log;
}

SceneConfig quiet_scene() {
  SceneConfig cfg;
  cfg.seed = 21;
  cfg.categories = default_categories();
  cfg.intrinsics = test::default_intrinsics();
  cfg.frames = 60;
  cfg.objects = {{0, "car", {Vec3(1.5, 9, 0.75), 0.4, Vec3(1.8, 4.2, 1.5)}, true},
                 {1, "chair", {Vec3(-1.5, 5, 0.45), -0.7, Vec3(0.55, 0.55, 0.9)}, true}};
  LineTrajectory tr;
  tr.start = Vec3(-2, 0, 1.2);
  tr.end = Vec3(2, 0, 1.2);
  tr.speed = 4.0 / 6.0;
  tr.look_at = Vec3(0, 7, 0.5);
  cfg.trajectory = tr;
  cfg.noise.sigma_px = 1.0;
  cfg.noise.confusion = diagonal_confusion(cfg.categories.size(), 0.9);
  cfg.noise.score_concentration = 50.0;
  cfg.noise.sigma_azimuth = 0.05;
  return cfg;
}

TEST(SemanticMapper, ConvergesOnQuietScene) {
  const auto seq = simulate(quiet_scene());
  const auto log = run(seq);
  const FrameSnapshot& last = log.back();
  ASSERT_EQ(last.objects.size(), 2u);
  for (const auto& gt : seq.world.objects) {
    double best = 1e9;
    for (const auto& o : last.objects)
      if (o.category == gt.category) best = std::min(best, (o.cuboid.center - gt.cuboid.center).norm());
    EXPECT_LT(best, 0.3) << gt.category;
  }
}

TEST(SemanticMapper, ReportsOnlyConfirmedObjects) {
  const auto seq = simulate(quiet_scene());
  FilterConfig cfg;
  SemanticMapper mapper(seq.world.config.categories, cfg);
  for (const auto& in : seq.frames) {
    const FrameSnapshot s = mapper.step(in);
    std::size_t confirmed = 0;
    for (const auto& o : mapper.objects()) confirmed += o.confirmed(cfg) ? 1 : 0;
    EXPECT_EQ(s.objects.size(), confirmed);
  }
  EXPECT_TRUE(run(seq).front().objects.empty());
}

TEST(SemanticMapper, EmptyFramesGiveEmptySnapshots) {
  SemanticMapper mapper(default_categories(), FilterConfig{});
  FrameInput in;
  in.intrinsics = test::default_intrinsics();
  for (int f = 0; f < 5; ++f) {
    in.frame = f;
    const FrameSnapshot s = mapper.step(in);
    EXPECT_EQ(s.frame, f);
    EXPECT_TRUE(s.objects.empty());
  }
  EXPECT_TRUE(mapper.objects().empty());
}

TEST(SemanticMapper, DeterministicAndCausal) {
  const auto seq = simulate(scenario("crowd", 3));
  const auto a = run(seq), b = run(seq);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(encode_state_line(a[i]), encode_state_line(b[i]));
  for (std::size_t t : {1u, 10u, 100u}) {
    const auto prefix = run(seq, {}, t);
    ASSERT_EQ(prefix.size(), t);
    for (std::size_t i = 0; i < t; ++i) EXPECT_EQ(encode_state_line(prefix[i]), encode_state_line(a[i]));
  }
}

TEST(SemanticMapper, OccludedObjectsAreFrozen) {
  const auto seq = simulate(scenario("occlusion"));
  SemanticMapper mapper(seq.world.config.categories, FilterConfig{});
  std::map<int, ObjectHypothesis> prev;
  int frozen_checks = 0;
  for (const auto& in : seq.frames) {
    mapper.step(in);
    std::map<int, ObjectHypothesis> now;
    for (const auto& o : mapper.objects()) now[o.id] = o;
    for (const auto& [id, o] : now) {
      const auto it = prev.find(id);
      if (it == prev.end() || !o.status.occluded() || !it->second.status.occluded()) continue;
      ObjectHypothesis a = it->second, b = o;
      a.status = b.status;
      a.memory = b.memory;
      EXPECT_TRUE(a == b) << "object " << id << " frame " << in.frame;
      ++frozen_checks;
    }
    prev = std::move(now);
  }
  EXPECT_GE(frozen_checks, 20);
}

TEST(SemanticMapper, DetectionsWithoutPointsAreDeferred) {
  auto seq = simulate(quiet_scene());
  for (auto& f : seq.frames) f.points.clear();
  SemanticMapper mapper(seq.world.config.categories, FilterConfig{});
  mapper.step(seq.frames[0]);
  EXPECT_TRUE(mapper.objects().empty());
  EXPECT_GT(mapper.last_stats().deferred, 0);
}

}  // namespace
}  // namespace vis3d
