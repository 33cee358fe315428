#pragma once

// Line-delimited JSON streams (poses, points, detections, ground truth,
// visibility, filter state log) and the key-value category file.
//
// Rotations are scalar-first unit quaternions [w, x, y, z] mapping camera to
// world; angles are radians; lengths are meters.

#include "vis3d/association.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace vis3d {

struct FrameInput {
  int frame = 0;
  double time = 0.0;
  RigidPose pose;
  Intrinsics intrinsics;
  std::vector<Vec3> points;
  std::vector<Detection> detections;
};

struct GroundTruthObject {
  int id = 0;
  std::string category;
  Cuboid cuboid;
  bool is_static = true;
};

struct VisibilityRecord {
  int frame = 0;
  int id = 0;
  Visibility status;
};

struct ObjectSnapshot {
  int id = 0;
  std::string category;
  double confidence = 0.0;
  Cuboid cuboid;
  VisibilityKind status = VisibilityKind::Visible;
  Memory memory = Memory::ShortTerm;
  friend bool operator==(const ObjectSnapshot& a, const ObjectSnapshot& b) {
    return a.id == b.id && a.category == b.category && a.confidence == b.confidence &&
           a.cuboid.center == b.cuboid.center && a.cuboid.yaw == b.cuboid.yaw && a.cuboid.dims == b.cuboid.dims &&
           a.status == b.status && a.memory == b.memory;
  }
};

struct FrameSnapshot {
  int frame = 0;
  std::vector<ObjectSnapshot> objects;
  friend bool operator==(const FrameSnapshot&, const FrameSnapshot&) = default;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Names

inline const char* to_string(VisibilityKind k) {
  switch (k) {
    case VisibilityKind::Visible: return "visible";
    case VisibilityKind::Occluded: return "occluded";
    case VisibilityKind::OutOfView: return "out_of_view";
  }
  return "out_of_view";
}

inline const char* to_string(Memory m) { return m == Memory::ShortTerm ? "short_term" : "long_term"; }

inline VisibilityKind parse_visibility(const std::string& s) {
  if (s == "visible") return VisibilityKind::Visible;
  if (s == "occluded") return VisibilityKind::Occluded;
  if (s == "out_of_view") return VisibilityKind::OutOfView;
  throw FormatError("unknown visibility status '" + s + "'");
}

inline Memory parse_memory(const std::string& s) {
  if (s == "short_term") return Memory::ShortTerm;
  if (s == "long_term") return Memory::LongTerm;
  throw FormatError("unknown memory tier '" + s + "'");
}

// ---------------------------------------------------------------------------
// Number formatting: 17 significant digits, so text round-trips exactly.

inline std::string format_number(double v) {
  if (!std::isfinite(v)) throw FormatError("refusing to serialize non-finite number");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void append_number(std::string& out, double v) { out += format_number(v); }

template <int N>
void append_array(std::string& out, const Eigen::Matrix<double, N, 1>& v) {
  out += '[';
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_number(out, v[i]);
  }
  out += ']';
}

inline void append_string(std::string& out, const std::string& s) { out += nlohmann::json(s).dump(); }

// ---------------------------------------------------------------------------
// Parsing helpers

namespace detail {

inline std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

inline double number(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw FormatError(std::string("missing numeric field '") + key + "'");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in '") + key + "'");
  return v;
}

inline int integer(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) throw FormatError(std::string("missing integer field '") + key + "'");
  return it->get<int>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    throw FormatError("expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw FormatError("expected a number in array");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
    if (!std::isfinite(v[i])) throw FormatError("non-finite coordinate");
  }
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  return vec<N>(*it);
}

inline Eigen::VectorXd dynamic_vec(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError("expected a number in array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) throw FormatError("non-finite value");
  }
  return v;
}

inline std::string text(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw FormatError(std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

/// Reads one JSON object per non-empty line, tagging errors with file:line.
class JsonLines {
 public:
  explicit JsonLines(std::filesystem::path path) : path_(std::move(path)), in_(path_) {
    if (!in_) throw FormatError("cannot open " + path_.string());
  }

  std::optional<nlohmann::json> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        nlohmann::json j = nlohmann::json::parse(line);
        if (!j.is_object()) throw FormatError("expected a JSON object");
        return j;
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(detail::where(path_, line_no_) + ": " + e.what());
      } catch (const FormatError& e) {
        throw FormatError(detail::where(path_, line_no_) + ": " + e.what());
      }
    }
    return std::nullopt;
  }

  /// Runs `fn` on the parsed line, rethrowing schema errors with context.
  template <class Fn>
  auto guarded(Fn&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(detail::where(path_, line_no_) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(detail::where(path_, line_no_) + ": " + e.what());
    }
  }

  const std::filesystem::path& path() const { return path_; }
  std::size_t line() const { return line_no_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

inline void check_written(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-line encoders / decoders

inline std::string encode_pose_line(const FrameInput& f) {
  const Eigen::Quaterniond& q = f.pose.rotation;
  std::string s = "{\"frame\":" + std::to_string(f.frame) + ",\"time\":" + format_number(f.time) + ",\"q\":[";
  s += format_number(q.w()) + "," + format_number(q.x()) + "," + format_number(q.y()) + "," + format_number(q.z());
  s += "],\"p\":";
  append_array<3>(s, f.pose.translation);
  const Intrinsics& K = f.intrinsics;
  s += ",\"fx\":" + format_number(K.fx) + ",\"fy\":" + format_number(K.fy) + ",\"cx\":" + format_number(K.cx) +
       ",\"cy\":" + format_number(K.cy) + ",\"width\":" + std::to_string(K.width) +
       ",\"height\":" + std::to_string(K.height) + "}";
  return s;
}

inline std::string encode_points_line(const FrameInput& f) {
  std::string s = "{\"frame\":" + std::to_string(f.frame) + ",\"points\":[";
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    if (i) s += ',';
    append_array<3>(s, f.points[i]);
  }
  return s + "]}";
}

inline std::string encode_detections_line(const FrameInput& f) {
  std::string s = "{\"frame\":" + std::to_string(f.frame) + ",\"dets\":[";
  for (std::size_t i = 0; i < f.detections.size(); ++i) {
    const Detection& d = f.detections[i];
    if (i) s += ',';
    s += "{\"box\":";
    append_array<4>(s, d.box.vector());
    s += ",\"scores\":[";
    for (Eigen::Index k = 0; k < d.scores.size(); ++k) {
      if (k) s += ',';
      append_number(s, d.scores[k]);
    }
    s += ']';
    if (d.azimuth) s += ",\"azimuth\":" + format_number(*d.azimuth);
    s += '}';
  }
  return s + "]}";
}

inline RigidPose decode_pose(const nlohmann::json& j, Intrinsics* K, double* time) {
  const Vec4 q = detail::vec<4>(j, "q");
  if (std::abs(q.norm() - 1.0) > 1e-6) throw FormatError("rotation quaternion is not unit norm");
  RigidPose pose;
  // Near-unit input is kept bit-exact so a written stream replays identically.
  pose.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
  if (std::abs(q.norm() - 1.0) > 1e-12) pose.rotation.normalize();
  pose.translation = detail::vec<3>(j, "p");
  if (K) {
    K->fx = detail::number(j, "fx");
    K->fy = detail::number(j, "fy");
    K->cx = detail::number(j, "cx");
    K->cy = detail::number(j, "cy");
    K->width = detail::integer(j, "width");
    K->height = detail::integer(j, "height");
    if (!K->valid()) throw FormatError("invalid intrinsics");
  }
  if (time) *time = j.contains("time") ? detail::number(j, "time") : 0.0;
  return pose;
}

inline Detection decode_detection(const nlohmann::json& j, std::size_t num_categories) {
  Detection d;
  const Vec4 b = detail::vec<4>(j, "box");
  if (b[0] > b[2] || b[1] > b[3]) throw FormatError("box has min > max");
  d.box = PixelBox::from_vector(b);
  if (!j.contains("scores")) throw FormatError("detection without scores");
  d.scores = detail::dynamic_vec(j.at("scores"));
  if (num_categories && static_cast<std::size_t>(d.scores.size()) != num_categories)
    throw FormatError("score vector has " + std::to_string(d.scores.size()) + " entries, expected " +
                      std::to_string(num_categories));
  if ((d.scores.array() < 0.0).any()) throw FormatError("negative detection score");
  if (j.contains("azimuth") && !j.at("azimuth").is_null()) d.azimuth = detail::number(j, "azimuth");
  return d;
}

// ---------------------------------------------------------------------------
// Sequence reader

/// Joins poses.jsonl, points.jsonl and detections.jsonl on frame index.
/// Frames come from the pose stream; a points/detections entry that refers
/// to a frame without a pose is an error.
class SequenceReader {
 public:
  SequenceReader(const std::filesystem::path& dir, std::size_t num_categories)
      : num_categories_(num_categories), poses_(dir / "poses.jsonl") {
    if (std::filesystem::exists(dir / "points.jsonl")) points_.emplace(dir / "points.jsonl");
    if (std::filesystem::exists(dir / "detections.jsonl")) dets_.emplace(dir / "detections.jsonl");
    advance(points_, pending_points_);
    advance(dets_, pending_dets_);
  }

  std::optional<FrameInput> next() {
    auto j = poses_.next();
    if (!j) {
      check_dangling(points_, pending_points_);
      check_dangling(dets_, pending_dets_);
      return std::nullopt;
    }
    FrameInput f;
    poses_.guarded([&] {
      f.frame = detail::integer(*j, "frame");
      f.pose = decode_pose(*j, &f.intrinsics, &f.time);
    });
    if (last_frame_ && f.frame <= *last_frame_)
      throw FormatError(detail::where(poses_.path(), poses_.line()) + ": frame index " + std::to_string(f.frame) +
                        " does not increase");
    last_frame_ = f.frame;

    consume(points_, pending_points_, f.frame, [&](const nlohmann::json& pj) {
      const auto& arr = pj.at("points");
      if (!arr.is_array()) throw FormatError("'points' must be an array");
      for (const auto& p : arr) f.points.push_back(detail::vec<3>(p));
    });
    consume(dets_, pending_dets_, f.frame, [&](const nlohmann::json& dj) {
      const auto& arr = dj.at("dets");
      if (!arr.is_array()) throw FormatError("'dets' must be an array");
      for (const auto& d : arr) f.detections.push_back(decode_detection(d, num_categories_));
    });
    return f;
  }

 private:
  struct Pending {
    std::optional<nlohmann::json> json;
    int frame = 0;
    std::optional<int> last;
  };

  void advance(std::optional<detail::JsonLines>& src, Pending& p) {
    p.json.reset();
    if (!src) return;
    p.json = src->next();
    if (!p.json) return;
    p.frame = src->guarded([&] { return detail::integer(*p.json, "frame"); });
    if (p.last && p.frame <= *p.last)
      throw FormatError(detail::where(src->path(), src->line()) + ": frame index " + std::to_string(p.frame) +
                        " does not increase");
    p.last = p.frame;
  }

  template <class Fn>
  void consume(std::optional<detail::JsonLines>& src, Pending& p, int frame, Fn&& fn) {
    while (p.json && p.frame <= frame) {
      if (p.frame < frame)
        throw FormatError(detail::where(src->path(), src->line()) + ": no pose for frame " + std::to_string(p.frame));
      src->guarded([&] { fn(*p.json); });
      advance(src, p);
    }
  }

  void check_dangling(std::optional<detail::JsonLines>& src, Pending& p) {
    if (p.json)
      throw FormatError(detail::where(src->path(), src->line()) + ": no pose for frame " + std::to_string(p.frame));
  }

  std::size_t num_categories_;
  detail::JsonLines poses_;
  std::optional<detail::JsonLines> points_;
  std::optional<detail::JsonLines> dets_;
  Pending pending_points_, pending_dets_;
  std::optional<int> last_frame_;
};

inline std::vector<FrameInput> read_sequence(const std::filesystem::path& dir, std::size_t num_categories) {
  SequenceReader reader(dir, num_categories);
  std::vector<FrameInput> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

inline void write_sequence(const std::filesystem::path& dir, const std::vector<FrameInput>& frames) {
  auto poses = detail::open_out(dir / "poses.jsonl");
  auto points = detail::open_out(dir / "points.jsonl");
  auto dets = detail::open_out(dir / "detections.jsonl");
  for (const FrameInput& f : frames) {
    poses << encode_pose_line(f) << '\n';
    points << encode_points_line(f) << '\n';
    dets << encode_detections_line(f) << '\n';
  }
  detail::check_written(poses, dir / "poses.jsonl");
  detail::check_written(points, dir / "points.jsonl");
  detail::check_written(dets, dir / "detections.jsonl");
}

// ---------------------------------------------------------------------------
// Ground truth and visibility oracle

inline std::string encode_gt_line(const GroundTruthObject& o) {
  std::string s = "{\"id\":" + std::to_string(o.id) + ",\"category\":";
  append_string(s, o.category);
  s += ",\"center\":";
  append_array<3>(s, o.cuboid.center);
  s += ",\"yaw\":" + format_number(o.cuboid.yaw) + ",\"dims\":";
  append_array<3>(s, o.cuboid.dims);
  s += std::string(",\"static\":") + (o.is_static ? "true" : "false") + "}";
  return s;
}

inline void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruthObject>& objects) {
  auto out = detail::open_out(path);
  for (const auto& o : objects) out << encode_gt_line(o) << '\n';
  detail::check_written(out, path);
}

inline std::vector<GroundTruthObject> read_ground_truth(const std::filesystem::path& path) {
  detail::JsonLines in(path);
  std::vector<GroundTruthObject> out;
  while (auto j = in.next()) {
    in.guarded([&] {
      GroundTruthObject o;
      o.id = detail::integer(*j, "id");
      o.category = detail::text(*j, "category");
      o.cuboid.center = detail::vec<3>(*j, "center");
      o.cuboid.yaw = detail::number(*j, "yaw");
      o.cuboid.dims = detail::vec<3>(*j, "dims");
      if (!o.cuboid.valid()) throw FormatError("invalid cuboid");
      o.is_static = j->value("static", true);
      if (!o.is_static) throw FormatError("moving objects are not supported");
      out.push_back(std::move(o));
    });
  }
  return out;
}

inline std::string encode_visibility_line(const VisibilityRecord& r) {
  std::string s = "{\"frame\":" + std::to_string(r.frame) + ",\"id\":" + std::to_string(r.id) + ",\"status\":\"" +
                  to_string(r.status.kind) + "\",\"fraction\":" + format_number(r.status.occluded_fraction) + "}";
  return s;
}

inline void write_visibility(const std::filesystem::path& path, const std::vector<VisibilityRecord>& records) {
  auto out = detail::open_out(path);
  for (const auto& r : records) out << encode_visibility_line(r) << '\n';
  detail::check_written(out, path);
}

inline std::vector<VisibilityRecord> read_visibility(const std::filesystem::path& path) {
  detail::JsonLines in(path);
  std::vector<VisibilityRecord> out;
  while (auto j = in.next()) {
    in.guarded([&] {
      VisibilityRecord r;
      r.frame = detail::integer(*j, "frame");
      r.id = detail::integer(*j, "id");
      r.status.kind = parse_visibility(detail::text(*j, "status"));
      r.status.occluded_fraction = j->contains("fraction") ? detail::number(*j, "fraction") : 0.0;
      out.push_back(r);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filter state log

inline std::string encode_state_line(const FrameSnapshot& snap) {
  std::string s = "{\"frame\":" + std::to_string(snap.frame) + ",\"objects\":[";
  for (std::size_t i = 0; i < snap.objects.size(); ++i) {
    const ObjectSnapshot& o = snap.objects[i];
    if (i) s += ',';
    s += "{\"id\":" + std::to_string(o.id) + ",\"category\":";
    append_string(s, o.category);
    s += ",\"confidence\":" + format_number(o.confidence) + ",\"center\":";
    append_array<3>(s, o.cuboid.center);
    s += ",\"yaw\":" + format_number(o.cuboid.yaw) + ",\"dims\":";
    append_array<3>(s, o.cuboid.dims);
    s += std::string(",\"status\":\"") + to_string(o.status) + "\",\"memory\":\"" + to_string(o.memory) + "\"}";
  }
  return s + "]}";
}

inline FrameSnapshot decode_state_line(const nlohmann::json& j) {
  FrameSnapshot snap;
  snap.frame = detail::integer(j, "frame");
  const auto it = j.find("objects");
  if (it == j.end() || !it->is_array()) throw FormatError("missing 'objects' array");
  for (const auto& oj : *it) {
    ObjectSnapshot o;
    o.id = detail::integer(oj, "id");
    o.category = detail::text(oj, "category");
    o.confidence = detail::number(oj, "confidence");
    o.cuboid.center = detail::vec<3>(oj, "center");
    o.cuboid.yaw = detail::number(oj, "yaw");
    o.cuboid.dims = detail::vec<3>(oj, "dims");
    o.status = parse_visibility(detail::text(oj, "status"));
    o.memory = parse_memory(detail::text(oj, "memory"));
    snap.objects.push_back(std::move(o));
  }
  return snap;
}

/// Streaming writer, one line per frame, flushed as it goes.
class StateLogWriter {
 public:
  explicit StateLogWriter(std::filesystem::path path) : path_(std::move(path)), out_(detail::open_out(path_)) {}
  void write(const FrameSnapshot& snap) {
    out_ << encode_state_line(snap) << '\n';
    detail::check_written(out_, path_);
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_state_log(const std::filesystem::path& path, const std::vector<FrameSnapshot>& log) {
  StateLogWriter w(path);
  for (const auto& s : log) w.write(s);
}

inline std::vector<FrameSnapshot> read_state_log(const std::filesystem::path& path) {
  detail::JsonLines in(path);
  std::vector<FrameSnapshot> out;
  while (auto j = in.next()) out.push_back(in.guarded([&] { return decode_state_line(*j); }));
  return out;
}

// ---------------------------------------------------------------------------
// Category file
//
//   [chair]
//   id = 1
//   log_dims_mean = [-0.598, -0.598, -0.105]
//   log_dims_cov = [0.04, 0.04, 0.04]      # diagonal, or 9 values row-major
//   score_gate = 0.3
//   process_noise = [1e-5, ...]            # 7 diagonal values, optional
//   init_cov = [1, 1, 1, 0.25, 0.09, ...]  # 7 diagonal values, optional

inline StateCov default_process_noise() {
  StateVec d;
  d << 1e-5, 1e-5, 1e-5, 1e-5, 1e-6, 1e-6, 1e-6;
  return d.asDiagonal();
}

inline StateCov default_init_cov() {
  StateVec d;
  d << 1.0, 1.0, 0.25, 0.25, 0.09, 0.09, 0.09;
  return d.asDiagonal();
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_values(const std::string& raw) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw FormatError("unterminated array");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      throw FormatError("not a number: '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(x)) throw FormatError("not a finite number: '" + item + "'");
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

inline CategorySet parse_categories(std::istream& in, const std::string& origin = "categories") {
  CategorySet out;
  std::string line;
  std::size_t line_no = 0;
  CategoryModel* cur = nullptr;
  std::vector<std::vector<std::string>> seen;
  auto fail = [&](const std::string& msg) { throw FormatError(origin + ":" + std::to_string(line_no) + ": " + msg); };

  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      CategoryModel m;
      m.name = detail::trim(line.substr(1, line.size() - 2));
      if (m.name.empty()) fail("empty category name");
      m.id = static_cast<int>(out.size());
      m.process_noise = default_process_noise();
      m.init_cov = default_init_cov();
      out.push_back(m);
      seen.emplace_back();
      cur = &out.back();
      continue;
    }
    if (!cur) fail("key outside of a [category] section");
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    std::vector<double> vals;
    try {
      vals = detail::parse_values(line.substr(eq + 1));
    } catch (const FormatError& e) {
      fail(e.what());
    }
    seen.back().push_back(key);
    auto need = [&](std::size_t n) {
      if (vals.size() != n) fail("'" + key + "' expects " + std::to_string(n) + " value(s)");
    };
    if (key == "id") {
      need(1);
      if (vals[0] != static_cast<double>(out.size() - 1)) fail("category ids must be 0..K-1 in file order");
    } else if (key == "log_dims_mean") {
      need(3);
      cur->log_dims_mean = Vec3(vals[0], vals[1], vals[2]);
    } else if (key == "log_dims_cov") {
      if (vals.size() == 3) cur->log_dims_cov = Vec3(vals[0], vals[1], vals[2]).asDiagonal();
      else if (vals.size() == 9) cur->log_dims_cov = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(vals.data());
      else fail("'log_dims_cov' expects 3 or 9 values");
    } else if (key == "score_gate") {
      need(1);
      if (vals[0] < 0 || vals[0] > 1) fail("score_gate must lie in [0, 1]");
      cur->score_gate = vals[0];
    } else if (key == "process_noise" || key == "init_cov") {
      need(7);
      StateCov& target = key == "process_noise" ? cur->process_noise : cur->init_cov;
      target = Eigen::Map<const StateVec>(vals.data()).asDiagonal();
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& m = out[i];
    if (std::find(seen[i].begin(), seen[i].end(), "log_dims_mean") == seen[i].end())
      throw FormatError(origin + ": category '" + m.name + "' lacks log_dims_mean");
    Eigen::LLT<Mat3> llt(m.log_dims_cov);
    if (llt.info() != Eigen::Success || !m.log_dims_cov.isApprox(m.log_dims_cov.transpose()))
      throw FormatError(origin + ": category '" + m.name + "' has a non-SPD log_dims_cov");
    if ((m.process_noise.diagonal().array() < 0).any() || (m.init_cov.diagonal().array() <= 0).any())
      throw FormatError(origin + ": category '" + m.name + "' has invalid noise settings");
  }
  if (out.empty()) throw FormatError(origin + ": no categories defined");
  return out;
}

inline CategorySet read_categories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_categories(in, path.string());
}

inline std::string encode_categories(const CategorySet& cats) {
  std::string s;
  auto list = [&](auto begin, auto end) {
    std::string r = "[";
    for (auto it = begin; it != end; ++it) {
      if (it != begin) r += ", ";
      r += format_number(*it);
    }
    return r + "]";
  };
  for (const CategoryModel& m : cats) {
    s += "[" + m.name + "]\n";
    s += "id = " + std::to_string(m.id) + "\n";
    s += "log_dims_mean = " + list(m.log_dims_mean.data(), m.log_dims_mean.data() + 3) + "\n";
    const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> cov = m.log_dims_cov;
    s += "log_dims_cov = " + list(cov.data(), cov.data() + 9) + "\n";
    s += "score_gate = " + format_number(m.score_gate) + "\n";
    const StateVec q = m.process_noise.diagonal(), p0 = m.init_cov.diagonal();
    s += "process_noise = " + list(q.data(), q.data() + 7) + "\n";
    s += "init_cov = " + list(p0.data(), p0.data() + 7) + "\n\n";
  }
  return s;
}

inline void write_categories(const std::filesystem::path& path, const CategorySet& cats) {
  auto out = detail::open_out(path);
  out << encode_categories(cats);
  detail::check_written(out, path);
}

// ---------------------------------------------------------------------------
// Filter configuration as flat key/value pairs

struct ConfigKey {
  const char* name;
  std::variant<double FilterConfig::*, int FilterConfig::*, double VisibilityParams::*, int VisibilityParams::*> field;
};

inline const std::vector<ConfigKey>& filter_config_keys() {
  static const std::vector<ConfigKey> keys{
      {"tau_dom", &FilterConfig::tau_dom},
      {"tau_merge", &FilterConfig::tau_merge},
      {"confirm_hits", &FilterConfig::confirm_hits},
      {"coast_frames", &FilterConfig::coast_frames},
      {"longterm_frames", &FilterConfig::longterm_frames},
      {"pixel_noise_base", &FilterConfig::pixel_noise_base},
      {"pixel_noise_rel", &FilterConfig::pixel_noise_rel},
      {"chi2_gate", &FilterConfig::chi2_gate},
      {"score_floor", &FilterConfig::score_floor},
      {"min_weight", &FilterConfig::min_weight},
      {"scale_prior_every", &FilterConfig::scale_prior_every},
      {"scale_gate", &FilterConfig::scale_gate},
      {"visibility_grid", &VisibilityParams::grid},
      {"occlusion_threshold", &VisibilityParams::occlusion_threshold},
      {"min_visible_area", &VisibilityParams::min_visible_area},
  };
  return keys;
}

/// Sets one key from its text form. Throws std::invalid_argument on an
/// unknown key or a malformed value.
inline void set_filter_config(FilterConfig& cfg, const std::string& key, const std::string& value) {
  for (const ConfigKey& k : filter_config_keys()) {
    if (key != k.name) continue;
    std::size_t used = 0;
    try {
      std::visit(
          [&](auto field) {
            using M = decltype(field);
            if constexpr (std::is_same_v<M, double FilterConfig::*>) cfg.*field = std::stod(value, &used);
            else if constexpr (std::is_same_v<M, int FilterConfig::*>) cfg.*field = std::stoi(value, &used);
            else if constexpr (std::is_same_v<M, double VisibilityParams::*>) cfg.visibility.*field = std::stod(value, &used);
            else cfg.visibility.*field = std::stoi(value, &used);
          },
          k.field);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw std::invalid_argument("bad value '" + value + "' for " + key);
    return;
  }
  throw std::invalid_argument("unknown filter config key '" + key + "'");
}

inline nlohmann::ordered_json filter_config_to_json(const FilterConfig& cfg) {
  nlohmann::ordered_json j;
  for (const ConfigKey& k : filter_config_keys())
    std::visit(
        [&](auto field) {
          using M = decltype(field);
          if constexpr (std::is_same_v<M, double FilterConfig::*> || std::is_same_v<M, int FilterConfig::*>)
            j[k.name] = cfg.*field;
          else
            j[k.name] = cfg.visibility.*field;
        },
        k.field);
  return j;
}

/// Applies every key of a flat JSON object.
inline void apply_filter_config(FilterConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("filter config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!v.is_number()) throw std::invalid_argument("filter config key '" + key + "' must be a number");
    set_filter_config(cfg, key, v.dump());
  }
}

/// Throws std::invalid_argument if a value is out of its meaningful range.
inline void validate_filter_config(const FilterConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("filter config: " + what); };
  if (!(c.tau_dom > 0 && c.tau_dom <= 1)) fail("tau_dom must be in (0, 1]");
  if (!(c.tau_merge > 0 && c.tau_merge <= 1)) fail("tau_merge must be in (0, 1]");
  if (c.confirm_hits < 1) fail("confirm_hits must be >= 1");
  if (c.coast_frames < 1) fail("coast_frames must be >= 1");
  if (c.longterm_frames < 1) fail("longterm_frames must be >= 1");
  if (!(c.pixel_noise_base > 0) || !(c.pixel_noise_rel >= 0)) fail("pixel noise must be positive");
  if (!(c.chi2_gate > 0) || !(c.scale_gate > 0)) fail("gates must be positive");
  if (!(c.score_floor > 0 && c.score_floor < 1)) fail("score_floor must be in (0, 1)");
  if (!(c.min_weight > 0 && c.min_weight <= 1)) fail("min_weight must be in (0, 1]");
  if (c.scale_prior_every < 0) fail("scale_prior_every must be >= 0");
  if (c.visibility.grid < 1) fail("visibility_grid must be >= 1");
  if (!(c.visibility.occlusion_threshold > 0 && c.visibility.occlusion_threshold <= 1))
    fail("occlusion_threshold must be in (0, 1]");
  if (!(c.visibility.min_visible_area >= 0)) fail("min_visible_area must be >= 0");
}

}  // namespace vis3d
