#pragma once

// Synthetic static scenes: ground-truth cuboids, camera trajectories,
// sparse points on visible faces and the ground, and a noisy detector.
// Every random draw derives from (seed, frame) so frames render
// independently and identically on every platform.

#include "vis3d/io.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <map>
#include <variant>

namespace vis3d {

struct NoiseConfig {
  double sigma_px = 0.0;              // detection corner jitter
  double p_detect = 1.0;
  double false_alarm_rate = 0.0;      // expected false alarms per frame
  Eigen::MatrixXd confusion;          // K x K row-stochastic; empty = identity
  double score_concentration = 0.0;   // <= 0 means noiseless scores (the confusion row itself)
  double sigma_pose_translation = 0.0;
  double sigma_pose_rotation = 0.0;
  double sigma_azimuth = 0.0;
  int points_per_face = 20;
  double sigma_point = 0.0;
  int ground_points = 200;
};

struct CircleTrajectory {
  Vec3 center = Vec3::Zero();
  double radius = 2.0;
  double height = 1.2;
  double angular_speed = 0.3;    // rad/s
  double start_angle = 0.0;
  bool outward = true;           // look away from the center, else towards it
  double pitch = 0.0;            // downward tilt, radians
};

struct LineTrajectory {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::UnitX();
  double speed = 1.0;            // m/s
  std::optional<Vec3> look_at;   // otherwise look along the motion
};

struct WaypointTrajectory {
  std::vector<Vec3> points;
  double speed = 1.0;
  std::optional<Vec3> look_at;
};

using Trajectory = std::variant<CircleTrajectory, LineTrajectory, WaypointTrajectory>;

struct PlacementSpec {
  std::string category;
  int count = 1;
  Vec2 region_min = Vec2(-5, -5);
  Vec2 region_max = Vec2(5, 5);
  double min_radius = 0.0;       // optional annulus about the origin
  double max_radius = std::numeric_limits<double>::infinity();
  double scale = 1.0;            // multiplies sampled dims
};

struct SceneConfig {
  std::uint64_t seed = 0;
  CategorySet categories;
  std::vector<GroundTruthObject> objects;   // explicit objects
  std::vector<PlacementSpec> sampled;
  double min_clearance = 0.0;               // footprint gap enforced between sampled objects
  Trajectory trajectory = CircleTrajectory{};
  int frames = 100;
  double frame_rate = 10.0;
  Intrinsics intrinsics;
  NoiseConfig noise;
};

struct World {
  SceneConfig config;
  std::vector<GroundTruthObject> objects;

  int category_id(const std::string& name) const {
    for (const auto& m : config.categories)
      if (m.name == name) return m.id;
    throw std::invalid_argument("unknown category '" + name + "'");
  }
};

struct RenderedFrame {
  FrameInput input;
  RigidPose true_pose;
  std::vector<Visibility> truth;   // per world.objects entry
  std::vector<int> detection_source;  // gt id per detection, -1 for false alarms
};

namespace detail {

using Rng = boost::random::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(splitmix64(seed ^ splitmix64(a * 0x100000001B3ull + splitmix64(b))));
}

inline double normal(Rng& rng, double sigma) {
  if (sigma <= 0) return 0.0;
  return boost::random::normal_distribution<double>(0.0, sigma)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return boost::random::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double unit(Rng& rng) { return boost::random::uniform_01<double>()(rng); }

inline Eigen::VectorXd dirichlet(Rng& rng, const Eigen::VectorXd& alpha) {
  Eigen::VectorXd out(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k)
    out[k] = alpha[k] > 0 ? boost::random::gamma_distribution<double>(alpha[k], 1.0)(rng) : 0.0;
  const double s = out.sum();
  if (s > 0) out /= s;
  return out;
}

inline Cuboid inflate(const Cuboid& c, double margin) {
  Cuboid r = c;
  r.dims.head<2>().array() += 2.0 * margin;
  return r;
}

}  // namespace detail

inline Eigen::MatrixXd confusion_matrix(const NoiseConfig& noise, std::size_t K) {
  if (noise.confusion.size() == 0) return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  return noise.confusion;
}

/// K x K matrix with `diag` on the diagonal and the rest spread evenly.
inline Eigen::MatrixXd diagonal_confusion(std::size_t K, double diag) {
  const auto n = static_cast<Eigen::Index>(K);
  if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, (1.0 - diag) / static_cast<double>(n - 1));
  m.diagonal().setConstant(diag);
  return m;
}

/// Throws std::invalid_argument on out-of-range noise or scene parameters.
inline void validate_scene_config(const SceneConfig& cfg) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scene config: " + what); };
  const NoiseConfig& n = cfg.noise;
  if (cfg.categories.empty()) fail("no categories");
  for (std::size_t k = 0; k < cfg.categories.size(); ++k)
    if (cfg.categories[k].id != static_cast<int>(k)) fail("category ids must be 0..K-1 in order");
  if (cfg.frames < 0) fail("negative frame count");
  if (!(cfg.frame_rate > 0)) fail("frame_rate must be positive");
  if (!cfg.intrinsics.valid()) fail("invalid intrinsics");
  if (!(n.p_detect >= 0 && n.p_detect <= 1)) fail("p_detect outside [0, 1]");
  if (!(n.false_alarm_rate >= 0)) fail("negative false_alarm_rate");
  if (!(n.sigma_px >= 0 && n.sigma_pose_translation >= 0 && n.sigma_pose_rotation >= 0 && n.sigma_azimuth >= 0 &&
        n.sigma_point >= 0))
    fail("negative noise sigma");
  if (n.points_per_face < 0 || n.ground_points < 0) fail("negative point count");
  if (n.confusion.size() != 0) {
    const auto K = static_cast<Eigen::Index>(cfg.categories.size());
    if (n.confusion.rows() != K || n.confusion.cols() != K) fail("confusion matrix must be K x K");
    if ((n.confusion.array() < 0).any()) fail("negative confusion entry");
    for (Eigen::Index r = 0; r < K; ++r)
      if (std::abs(n.confusion.row(r).sum() - 1.0) > 1e-9) fail("confusion rows must sum to 1");
  }
  for (const PlacementSpec& p : cfg.sampled) {
    if (p.count < 0) fail("negative placement count");
    if (!(p.scale > 0)) fail("placement scale must be positive");
    if ((p.region_max.array() < p.region_min.array()).any()) fail("empty placement region");
  }
}

/// True camera-to-world pose at frame index i.
inline RigidPose trajectory_pose(const SceneConfig& cfg, int i) {
  const double t = i / cfg.frame_rate;
  return std::visit(
      [&](const auto& tr) -> RigidPose {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, CircleTrajectory>) {
          const double th = tr.start_angle + tr.angular_speed * t;
          const Vec3 radial(std::cos(th), std::sin(th), 0.0);
          const Vec3 pos = tr.center + tr.radius * radial + Vec3(0, 0, tr.height);
          const Vec3 horiz = tr.outward ? radial : Vec3(-radial);
          const Vec3 fwd = std::cos(tr.pitch) * horiz - std::sin(tr.pitch) * Vec3::UnitZ();
          return look_along(pos, fwd);
        } else {
          std::vector<Vec3> pts;
          if constexpr (std::is_same_v<T, LineTrajectory>) pts = {tr.start, tr.end};
          else pts = tr.points;
          if (pts.empty()) throw std::invalid_argument("trajectory without waypoints");
          double travel = tr.speed * t;
          Vec3 pos = pts.back(), dir = Vec3::UnitX();
          if (pts.size() >= 2) dir = (pts[1] - pts[0]).normalized();
          for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
            const Vec3 seg = pts[k + 1] - pts[k];
            const double len = seg.norm();
            if (len <= 0) continue;
            dir = seg / len;
            if (travel <= len) {
              pos = pts[k] + travel * dir;
              break;
            }
            travel -= len;
            pos = pts[k + 1];
          }
          const Vec3 fwd = tr.look_at ? Vec3(*tr.look_at - pos) : dir;
          return look_along(pos, fwd);
        }
      },
      cfg.trajectory);
}

/// Deterministic world from the seed: explicit objects plus rejection-sampled
/// placements that do not overlap anything placed before.
inline World build_scene(const SceneConfig& cfg) {
  validate_scene_config(cfg);
  World w;
  w.config = cfg;
  w.objects = cfg.objects;
  int next_id = 0;
  for (const auto& o : w.objects) {
    w.category_id(o.category);
    if (!o.cuboid.valid()) throw std::invalid_argument("invalid explicit cuboid");
    next_id = std::max(next_id, o.id + 1);
  }
  for (std::size_t i = 0; i < w.objects.size(); ++i)
    for (std::size_t j = i + 1; j < w.objects.size(); ++j)
      if (oriented_overlap_3d(w.objects[i].cuboid, w.objects[j].cuboid) > 0.0)
        throw std::invalid_argument("explicit objects " + std::to_string(w.objects[i].id) + " and " +
                                    std::to_string(w.objects[j].id) + " overlap");
  detail::Rng rng = detail::stream(cfg.seed, 0xC0FFEEull);
  for (const PlacementSpec& spec : cfg.sampled) {
    const CategoryModel& m = cfg.categories.at(static_cast<std::size_t>(w.category_id(spec.category)));
    const Mat3 L = m.log_dims_cov.llt().matrixL();
    for (int n = 0; n < spec.count; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
        const Vec3 z(detail::normal(rng, 1.0), detail::normal(rng, 1.0), detail::normal(rng, 1.0));
        Cuboid c;
        c.dims = (m.log_dims_mean + L * z).array().exp().matrix() * spec.scale;
        c.yaw = detail::uniform(rng, -kPi, kPi);
        c.center = Vec3(detail::uniform(rng, spec.region_min.x(), spec.region_max.x()),
                        detail::uniform(rng, spec.region_min.y(), spec.region_max.y()), 0.5 * c.dims.z());
        const double r = c.center.head<2>().norm();
        if (r < spec.min_radius || r > spec.max_radius) continue;
        bool clear = true;
        for (const auto& o : w.objects)
          if (oriented_overlap_3d(detail::inflate(c, cfg.min_clearance), o.cuboid) > 0.0) {
            clear = false;
            break;
          }
        if (!clear) continue;
        w.objects.push_back({next_id++, spec.category, c, true});
        placed = true;
      }
      if (!placed) throw std::runtime_error("could not place '" + spec.category + "' after 10^4 attempts");
    }
  }
  return w;
}

/// Visibility of every ground-truth object from a pose, each tested against
/// all the others.
inline std::vector<Visibility> true_visibility(const World& w, const RigidPose& pose, const VisibilityParams& vp = {}) {
  std::vector<Visibility> out;
  std::vector<Cuboid> others;
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < w.objects.size(); ++j)
      if (j != i) others.push_back(w.objects[j].cuboid);
    out.push_back(visibility_status(w.objects[i].cuboid, others, w.config.intrinsics, pose, vp));
  }
  return out;
}

namespace detail {

/// A point is observed if it projects into the image and no cuboid lies in
/// front of it along the viewing ray.
inline bool point_observable(const World& w, const RigidPose& pose, const Vec3& X, int skip = -1) {
  const auto p = project_point(w.config.intrinsics, pose, X);
  if (!p || !image_rect(w.config.intrinsics).contains(*p)) return false;
  const Vec3 dir = X - pose.translation;
  for (std::size_t j = 0; j < w.objects.size(); ++j) {
    if (static_cast<int>(j) == skip) continue;
    const auto t = ray_cuboid_entry(pose.translation, dir, w.objects[j].cuboid);
    if (t && *t < 1.0 - 1e-9) return false;
  }
  return true;
}

}  // namespace detail

inline RenderedFrame render_frame(const World& w, int frame) {
  const SceneConfig& cfg = w.config;
  const NoiseConfig& nz = cfg.noise;
  const Intrinsics& K = cfg.intrinsics;
  const std::size_t Kc = cfg.categories.size();
  detail::Rng rng = detail::stream(cfg.seed, 1, static_cast<std::uint64_t>(frame));

  RenderedFrame out;
  out.true_pose = trajectory_pose(cfg, frame);
  out.truth = true_visibility(w, out.true_pose);

  FrameInput& in = out.input;
  in.frame = frame;
  in.time = frame / cfg.frame_rate;
  in.intrinsics = K;
  in.pose = out.true_pose;
  if (nz.sigma_pose_translation > 0 || nz.sigma_pose_rotation > 0) {
    const Vec3 dt(detail::normal(rng, nz.sigma_pose_translation), detail::normal(rng, nz.sigma_pose_translation),
                  detail::normal(rng, nz.sigma_pose_translation));
    const Vec3 dr(detail::normal(rng, nz.sigma_pose_rotation), detail::normal(rng, nz.sigma_pose_rotation),
                  detail::normal(rng, nz.sigma_pose_rotation));
    in.pose.translation += dt;
    if (dr.norm() > 0)
      in.pose.rotation = (in.pose.rotation * Eigen::Quaterniond(Eigen::AngleAxisd(dr.norm(), dr.normalized()))).normalized();
  }

  // Sparse points on camera-facing faces of every object, then the ground.
  const Vec3& cam = out.true_pose.translation;
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    const Cuboid& c = w.objects[i].cuboid;
    const Mat3 R = yaw_rotation(c.yaw);
    for (int axis = 0; axis < 3; ++axis) {
      for (int side : {-1, 1}) {
        Vec3 n_local = Vec3::Zero();
        n_local[axis] = side;
        const Vec3 n = R * n_local;
        const Vec3 face_center = c.center + R * (0.5 * c.dims[axis] * n_local);
        if (n.dot(cam - face_center) <= 0) continue;
        for (int s = 0; s < nz.points_per_face; ++s) {
          Vec3 local = 0.5 * c.dims.cwiseProduct(n_local);
          for (int a = 0; a < 3; ++a)
            if (a != axis) local[a] = detail::uniform(rng, -0.5 * c.dims[a], 0.5 * c.dims[a]);
          const Vec3 X = c.center + R * local;
          if (!detail::point_observable(w, out.true_pose, X, static_cast<int>(i))) continue;
          in.points.push_back(X + Vec3(detail::normal(rng, nz.sigma_point), detail::normal(rng, nz.sigma_point),
                                       detail::normal(rng, nz.sigma_point)));
        }
      }
    }
  }
  for (int s = 0; s < nz.ground_points; ++s) {
    const Vec3 X(cam.x() + detail::uniform(rng, -12.0, 12.0), cam.y() + detail::uniform(rng, -12.0, 12.0), 0.0);
    if (!detail::point_observable(w, out.true_pose, X)) continue;
    in.points.push_back(X + Vec3(detail::normal(rng, nz.sigma_point), detail::normal(rng, nz.sigma_point),
                                 detail::normal(rng, nz.sigma_point)));
  }

  // Detector.
  const Eigen::MatrixXd confusion = confusion_matrix(nz, Kc);
  const PixelBox image = image_rect(K);
  const double heading = camera_heading(out.true_pose.rotation);
  auto draw_scores = [&](const Eigen::VectorXd& center) -> Eigen::VectorXd {
    if (nz.score_concentration <= 0) return center;
    return detail::dirichlet(rng, nz.score_concentration * center);
  };
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    if (!out.truth[i].visible()) continue;
    if (detail::unit(rng) >= nz.p_detect) continue;
    const auto box = project_cuboid(K, out.true_pose, w.objects[i].cuboid);
    if (!box) continue;
    Detection d;
    Vec4 b = box->vector();
    for (int k = 0; k < 4; ++k) b[k] += detail::normal(rng, nz.sigma_px);
    if (b[0] > b[2]) std::swap(b[0], b[2]);
    if (b[1] > b[3]) std::swap(b[1], b[3]);
    d.box = PixelBox::from_vector(b);
    if (intersect(d.box, image).area() <= 0) continue;
    const auto k = static_cast<Eigen::Index>(w.category_id(w.objects[i].category));
    d.scores = draw_scores(confusion.row(k).transpose());
    d.azimuth = wrap_angle(w.objects[i].cuboid.yaw - heading + detail::normal(rng, nz.sigma_azimuth));
    in.detections.push_back(std::move(d));
    out.detection_source.push_back(w.objects[i].id);
  }
  const int n_fa =
      nz.false_alarm_rate > 0 ? boost::random::poisson_distribution<int, double>(nz.false_alarm_rate)(rng) : 0;
  for (int n = 0; n < n_fa; ++n) {
    const double bw = detail::uniform(rng, 30.0, std::min(200.0, 0.9 * K.width));
    const double bh = detail::uniform(rng, 30.0, std::min(200.0, 0.9 * K.height));
    const double x0 = detail::uniform(rng, 0.0, K.width - bw);
    const double y0 = detail::uniform(rng, 0.0, K.height - bh);
    Detection d;
    d.box = {x0, y0, x0 + bw, y0 + bh};
    const double conc = nz.score_concentration > 0 ? nz.score_concentration : 1.0;
    d.scores = detail::dirichlet(rng, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(Kc), conc / static_cast<double>(Kc)));
    d.azimuth = detail::uniform(rng, -kPi, kPi);
    in.detections.push_back(std::move(d));
    out.detection_source.push_back(-1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Category and scenario library

/// Shipped categories. dims are (x extent, y extent, height) in meters;
/// the person prior has unit expected volume.
inline CategorySet default_categories() {
  auto make = [](int id, std::string name, Vec3 dims, Vec3 log_var, double gate) {
    CategoryModel m;
    m.id = id;
    m.name = std::move(name);
    m.log_dims_mean = dims.array().log();
    m.log_dims_cov = log_var.asDiagonal();
    m.score_gate = gate;
    m.process_noise = default_process_noise();
    m.init_cov = default_init_cov();
    return m;
  };
  return {
      make(0, "car", {1.8, 4.2, 1.5}, {0.01, 0.01, 0.01}, 0.3),
      make(1, "chair", {0.55, 0.55, 0.9}, {0.02, 0.02, 0.02}, 0.3),
      make(2, "person", {0.75, 0.75, 16.0 / 9.0}, {0.06, 0.06, 0.015}, 0.3),
      make(3, "monitor", {0.6, 0.2, 0.45}, {0.03, 0.03, 0.03}, 0.3),
  };
}

inline std::vector<std::string> scenario_names() { return {"crowd", "loop", "occlusion", "toycar"}; }

inline SceneConfig scenario(const std::string& name, std::uint64_t seed = 7) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.categories = default_categories();
  cfg.intrinsics = {500, 500, 320, 240, 640, 480};
  cfg.frame_rate = 10.0;

  if (name == "loop") {
    // Camera on a small circle looking outward; everything is passed twice.
    cfg.frames = 300;
    cfg.intrinsics = {400, 400, 320, 240, 640, 480};
    CircleTrajectory tr;
    tr.radius = 1.0;
    tr.height = 1.3;
    tr.angular_speed = 2.0 * (2.0 * kPi) / (cfg.frames / cfg.frame_rate);  // two revolutions
    tr.pitch = 0.2;
    cfg.trajectory = tr;
    cfg.sampled = {
        {"chair", 3, {-7, -7}, {7, 7}, 3.5, 6.0},
        {"person", 2, {-7, -7}, {7, 7}, 3.5, 6.0},
        {"monitor", 3, {-7, -7}, {7, 7}, 3.5, 6.0},
    };
    cfg.min_clearance = 0.8;
    cfg.noise.sigma_px = 5.0;
    cfg.noise.p_detect = 0.9;
    cfg.noise.false_alarm_rate = 0.5;
    cfg.noise.confusion = diagonal_confusion(cfg.categories.size(), 0.8);
    cfg.noise.score_concentration = 40.0;
    cfg.noise.sigma_azimuth = 0.1;
    cfg.noise.sigma_pose_translation = 0.01;
    cfg.noise.sigma_pose_rotation = 0.002;
    cfg.noise.sigma_point = 0.01;
  } else if (name == "toycar") {
    // A real car and a car-shaped cuboid at a tenth of the scale, both
    // scored as cars by the detector.
    cfg.frames = 200;
    const CategoryModel& car = cfg.categories[0];
    const Vec3 dims = car.log_dims_mean.array().exp();
    cfg.objects = {
        {0, "car", {Vec3(2.5, 12.0, 0.5 * dims.z()), 0.3, dims}, true},
        {1, "car", {Vec3(-0.6, 2.5, 0.05 * dims.z()), -0.4, 0.1 * dims}, true},
    };
    LineTrajectory tr;
    tr.start = Vec3(-1.5, -1.0, 1.0);
    tr.end = Vec3(1.5, -1.0, 1.0);
    tr.speed = 3.0 / (cfg.frames / cfg.frame_rate);
    tr.look_at = Vec3(0.5, 6.0, 0.4);
    cfg.trajectory = tr;
    cfg.noise.sigma_px = 2.0;
    cfg.noise.p_detect = 0.95;
    cfg.noise.confusion = diagonal_confusion(cfg.categories.size(), 0.85);
    cfg.noise.score_concentration = 40.0;
    cfg.noise.sigma_azimuth = 0.1;
    cfg.noise.sigma_point = 0.005;
  } else if (name == "occlusion") {
    // A chair passes behind a parked car as the camera slides sideways.
    cfg.frames = 200;
    const Vec3 car = cfg.categories[0].log_dims_mean.array().exp();
    const Vec3 chair = cfg.categories[1].log_dims_mean.array().exp();
    cfg.objects = {
        {0, "car", {Vec3(0.0, 3.0, 0.5 * car.z()), kPi / 2, car}, true},
        {1, "chair", {Vec3(0.0, 7.0, 0.5 * chair.z()), 0.2, chair}, true},
    };
    LineTrajectory tr;
    tr.start = Vec3(-7.0, 0.0, 1.0);
    tr.end = Vec3(7.0, 0.0, 1.0);
    tr.speed = 14.0 / (cfg.frames / cfg.frame_rate);
    tr.look_at = Vec3(0.0, 7.0, 0.45);
    cfg.trajectory = tr;
    cfg.noise.sigma_px = 3.0;
    cfg.noise.p_detect = 0.95;
    cfg.noise.confusion = diagonal_confusion(cfg.categories.size(), 0.85);
    cfg.noise.score_concentration = 40.0;
    cfg.noise.sigma_azimuth = 0.1;
    cfg.noise.sigma_point = 0.005;
  } else if (name == "crowd") {
    // Four chairs in a row, 0.9 m apart, seen from a slow circular sweep.
    cfg.frames = 150;
    const Vec3 chair = cfg.categories[1].log_dims_mean.array().exp();
    for (int i = 0; i < 4; ++i)
      cfg.objects.push_back({i, "chair", {Vec3(-1.35 + 0.9 * i, 4.0, 0.5 * chair.z()), 0.1 * i, chair}, true});
    CircleTrajectory tr;
    tr.center = Vec3(0.0, 4.0, 0.0);
    tr.radius = 4.0;
    tr.height = 1.4;
    tr.start_angle = -kPi / 2 - 0.6;
    tr.angular_speed = 1.2 / (cfg.frames / cfg.frame_rate);
    tr.outward = false;
    tr.pitch = 0.0;
    cfg.trajectory = tr;
    cfg.noise.sigma_px = 3.0;
    cfg.noise.p_detect = 0.9;
    cfg.noise.confusion = diagonal_confusion(cfg.categories.size(), 0.85);
    cfg.noise.score_concentration = 40.0;
    cfg.noise.sigma_azimuth = 0.1;
    cfg.noise.sigma_point = 0.005;
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  return cfg;
}

/// Renders the whole sequence: frame inputs plus the visibility oracle.
struct SimulatedSequence {
  World world;
  std::vector<FrameInput> frames;
  std::vector<RigidPose> true_poses;
  std::vector<VisibilityRecord> visibility;
};

inline SimulatedSequence simulate(const SceneConfig& cfg) {
  SimulatedSequence seq;
  seq.world = build_scene(cfg);
  for (int i = 0; i < cfg.frames; ++i) {
    RenderedFrame r = render_frame(seq.world, i);
    for (std::size_t k = 0; k < seq.world.objects.size(); ++k)
      seq.visibility.push_back({i, seq.world.objects[k].id, r.truth[k]});
    seq.true_poses.push_back(r.true_pose);
    seq.frames.push_back(std::move(r.input));
  }
  return seq;
}

/// Writes the six stream files: poses, points, detections, categories,
/// ground truth and the visibility oracle.
inline void write_simulation(const std::filesystem::path& dir, const SimulatedSequence& seq) {
  std::filesystem::create_directories(dir);
  write_sequence(dir, seq.frames);
  write_categories(dir / "categories.toml", seq.world.config.categories);
  write_ground_truth(dir / "gt.jsonl", seq.world.objects);
  write_visibility(dir / "visibility.jsonl", seq.visibility);
}

// ---------------------------------------------------------------------------
// JSON scene files
//
// {"scenario": "loop", "seed": 3, "frames": 120, "noise": {"sigma_px": 2}}
// starts from a named scenario (optional) and overrides the listed fields.
// Trajectories: {"type": "circle"|"line"|"waypoints", ...}; confusion is a
// K x K array or {"diagonal": d}.

namespace detail {

template <int N>
Eigen::Matrix<double, N, 1> json_vec(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.size() != N)
    throw std::invalid_argument(std::string("scene config: '") + key + "' must be an array of " + std::to_string(N));
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

template <class T>
void json_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <int N>
void json_get_vec(const nlohmann::json& j, const char* key, Eigen::Matrix<double, N, 1>& out) {
  if (j.contains(key)) out = json_vec<N>(j.at(key), key);
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  const std::string type = j.value("type", "");
  if (type == "circle") {
    CircleTrajectory t;
    json_get_vec<3>(j, "center", t.center);
    json_get(j, "radius", t.radius);
    json_get(j, "height", t.height);
    json_get(j, "angular_speed", t.angular_speed);
    json_get(j, "start_angle", t.start_angle);
    json_get(j, "outward", t.outward);
    json_get(j, "pitch", t.pitch);
    return t;
  }
  auto look_at = [&]() -> std::optional<Vec3> {
    if (!j.contains("look_at") || j.at("look_at").is_null()) return std::nullopt;
    return json_vec<3>(j.at("look_at"), "look_at");
  };
  if (type == "line") {
    LineTrajectory t;
    json_get_vec<3>(j, "start", t.start);
    json_get_vec<3>(j, "end", t.end);
    json_get(j, "speed", t.speed);
    t.look_at = look_at();
    return t;
  }
  if (type == "waypoints") {
    WaypointTrajectory t;
    for (const auto& p : j.at("points")) t.points.push_back(json_vec<3>(p, "points"));
    json_get(j, "speed", t.speed);
    t.look_at = look_at();
    return t;
  }
  throw std::invalid_argument("scene config: unknown trajectory type '" + type + "'");
}

}  // namespace detail

inline SceneConfig scene_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("scene config: top level must be an object");
  SceneConfig cfg;
  if (j.contains("scenario")) {
    cfg = scenario(j.at("scenario").get<std::string>());
  } else {
    cfg.categories = default_categories();
  }
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    detail::json_get(j, "frames", cfg.frames);
    detail::json_get(j, "frame_rate", cfg.frame_rate);
    detail::json_get(j, "min_clearance", cfg.min_clearance);
    if (j.contains("intrinsics")) {
      const auto& k = j.at("intrinsics");
      detail::json_get(k, "fx", cfg.intrinsics.fx);
      detail::json_get(k, "fy", cfg.intrinsics.fy);
      detail::json_get(k, "cx", cfg.intrinsics.cx);
      detail::json_get(k, "cy", cfg.intrinsics.cy);
      detail::json_get(k, "width", cfg.intrinsics.width);
      detail::json_get(k, "height", cfg.intrinsics.height);
    }
    if (j.contains("trajectory")) cfg.trajectory = detail::trajectory_from_json(j.at("trajectory"));
    if (j.contains("objects")) {
      cfg.objects.clear();
      int next = 0;
      for (const auto& o : j.at("objects")) {
        GroundTruthObject g;
        g.id = o.value("id", next);
        next = g.id + 1;
        g.category = o.at("category").get<std::string>();
        g.cuboid.dims = detail::json_vec<3>(o.at("dims"), "dims");
        g.cuboid.center = detail::json_vec<3>(o.at("center"), "center");
        g.cuboid.yaw = o.value("yaw", 0.0);
        cfg.objects.push_back(g);
      }
    }
    if (j.contains("sampled")) {
      cfg.sampled.clear();
      for (const auto& o : j.at("sampled")) {
        PlacementSpec p;
        p.category = o.at("category").get<std::string>();
        detail::json_get(o, "count", p.count);
        detail::json_get_vec<2>(o, "region_min", p.region_min);
        detail::json_get_vec<2>(o, "region_max", p.region_max);
        detail::json_get(o, "min_radius", p.min_radius);
        if (o.contains("max_radius")) p.max_radius = o.at("max_radius").get<double>();
        detail::json_get(o, "scale", p.scale);
        cfg.sampled.push_back(p);
      }
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      NoiseConfig& c = cfg.noise;
      detail::json_get(n, "sigma_px", c.sigma_px);
      detail::json_get(n, "p_detect", c.p_detect);
      detail::json_get(n, "false_alarm_rate", c.false_alarm_rate);
      detail::json_get(n, "score_concentration", c.score_concentration);
      detail::json_get(n, "sigma_pose_translation", c.sigma_pose_translation);
      detail::json_get(n, "sigma_pose_rotation", c.sigma_pose_rotation);
      detail::json_get(n, "sigma_azimuth", c.sigma_azimuth);
      detail::json_get(n, "points_per_face", c.points_per_face);
      detail::json_get(n, "sigma_point", c.sigma_point);
      detail::json_get(n, "ground_points", c.ground_points);
      if (n.contains("confusion")) {
        const auto& m = n.at("confusion");
        if (m.is_object()) {
          c.confusion = diagonal_confusion(cfg.categories.size(), m.at("diagonal").get<double>());
        } else {
          const auto K = static_cast<Eigen::Index>(m.size());
          c.confusion.resize(K, K);
          for (Eigen::Index r = 0; r < K; ++r) {
            const auto& row = m.at(static_cast<std::size_t>(r));
            if (row.size() != m.size()) throw std::invalid_argument("scene config: confusion must be square");
            for (Eigen::Index col = 0; col < K; ++col) c.confusion(r, col) = row.at(static_cast<std::size_t>(col)).get<double>();
          }
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scene config: ") + e.what());
  }
  validate_scene_config(cfg);
  return cfg;
}

inline SceneConfig read_scene_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scene config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return scene_config_from_json(j);
}

}  // namespace vis3d
