#include "test_util.hpp"

#include <fstream>

namespace vis3d {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("vis3d_io_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& file, const std::string& text) const {
    std::ofstream(path / file) << text;
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kPose0 = R"({"frame":0,"time":0,"q":[1,0,0,0],"p":[0,0,0],"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480})";
const char* kPose1 = R"({"frame":1,"time":0.1,"q":[1,0,0,0],"p":[0.1,0,0],"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480})";
const char* kPose2 = R"({"frame":2,"time":0.2,"q":[1,0,0,0],"p":[0.2,0,0],"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480,"cov":[0.1,0.1]})";

void write_fixture(const TempDir& d, bool skip_det1 = false, bool skip_pose1 = false) {
  d.write("poses.jsonl", std::string(kPose0) + "\n" + (skip_pose1 ? "" : std::string(kPose1) + "\n") + kPose2 + "\n");
  d.write("points.jsonl",
          "{\"frame\":0,\"points\":[[0,0,5],[1,1,5]]}\n{\"frame\":1,\"points\":[]}\n{\"frame\":2,\"points\":[[2,0,4]]}\n");
  std::string dets = "{\"frame\":0,\"dets\":[{\"box\":[1,2,30,40],\"scores\":[0.9,0.1],\"azimuth\":0.5}]}\n";
  if (!skip_det1) dets += "{\"frame\":1,\"dets\":[{\"box\":[5,5,10,10],\"scores\":[0.2,0.7]}]}\n";
  dets += "{\"frame\":2,\"dets\":[]}\n";
  d.write("detections.jsonl", dets);
}

TEST(ReadSequence, WellFormedFixture) {
  TempDir d("fixture");
  write_fixture(d);
  const auto frames = read_sequence(d.path, 2);
  ASSERT_EQ(frames.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(frames[static_cast<std::size_t>(i)].frame, i);
  EXPECT_EQ(frames[0].points.size(), 2u);
  EXPECT_EQ(frames[0].detections.size(), 1u);
  EXPECT_EQ(frames[0].detections[0].box, (PixelBox{1, 2, 30, 40}));
  EXPECT_DOUBLE_EQ(*frames[0].detections[0].azimuth, 0.5);
  EXPECT_FALSE(frames[1].detections[0].azimuth);
  EXPECT_DOUBLE_EQ(frames[1].time, 0.1);
  EXPECT_DOUBLE_EQ(frames[2].pose.translation.x(), 0.2);
  EXPECT_EQ(frames[2].intrinsics.width, 640);
}

TEST(ReadSequence, MissingDetectionsGiveEmptyList) {
  TempDir d("missing_det");
  write_fixture(d, true);
  const auto frames = read_sequence(d.path, 2);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_TRUE(frames[1].detections.empty());
}

TEST(ReadSequence, MissingPoseNamesFrame) {
  TempDir d("missing_pose");
  write_fixture(d, false, true);
  try {
    read_sequence(d.path, 2);
    FAIL() << "expected an error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }
}

TEST(ReadSequence, MalformedLineReportsFileAndLine) {
  TempDir d("malformed");
  write_fixture(d);
  d.write("detections.jsonl", "{\"frame\":0,\"dets\":[]}\n{\"frame\":1,\"dets\":[{\"box\":[1,2,3]}]}\n");
  try {
    read_sequence(d.path, 2);
    FAIL() << "expected an error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("detections.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(ReadSequence, FrameRegressionIsAnError) {
  TempDir d("regress");
  d.write("poses.jsonl", std::string(kPose1) + "\n" + kPose0 + "\n");
  EXPECT_THROW(read_sequence(d.path, 2), FormatError);
}

TEST(ReadSequence, RejectsBadValues) {
  TempDir d("bad");
  write_fixture(d);
  d.write("detections.jsonl", "{\"frame\":0,\"dets\":[{\"box\":[1,2,30,40],\"scores\":[0.9]}]}\n");
  EXPECT_THROW(read_sequence(d.path, 2), FormatError);  // wrong score length
  d.write("detections.jsonl", "{\"frame\":0,\"dets\":[{\"box\":[1,2,30,40],\"scores\":[NaN,0]}]}\n");
  EXPECT_THROW(read_sequence(d.path, 2), FormatError);
  d.write("detections.jsonl", "");
  d.write("points.jsonl", "{\"frame\":0,\"points\":[[0,0,1e999]]}\n");
  EXPECT_THROW(read_sequence(d.path, 2), FormatError);
  d.write("points.jsonl", "");
  d.write("poses.jsonl",
          R"({"frame":0,"q":[2,0,0,0],"p":[0,0,0],"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480})"
          "\n");
  EXPECT_THROW(read_sequence(d.path, 2), FormatError);  // non-unit quaternion
}

TEST(Sequence, WriteReadRoundTrip) {
  std::mt19937_64 rng(40);
  std::vector<FrameInput> frames;
  for (int f = 0; f < 5; ++f) {
    FrameInput in;
    in.frame = 2 * f;
    in.time = 0.1 * f;
    in.pose.rotation = Eigen::Quaterniond::UnitRandom();
    in.pose.translation = Vec3::Random();
    for (int i = 0; i < 7; ++i) in.points.push_back(Vec3::Random() * 3);
    for (int i = 0; i < f; ++i) {
      Detection d;
      const double x = test::uniform(rng, 0, 600);
      d.box = {x, 10.0 / 3.0, x + 1.0 / 7.0, 100};
      d.scores = Eigen::VectorXd::Random(3).cwiseAbs();
      if (i % 2) d.azimuth = test::uniform(rng, -3, 3);
      in.detections.push_back(d);
    }
    frames.push_back(in);
  }
  TempDir d("roundtrip");
  write_sequence(d.path, frames);
  const auto back = read_sequence(d.path, 3);
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    EXPECT_EQ(back[f].frame, frames[f].frame);
    EXPECT_EQ(back[f].time, frames[f].time);
    EXPECT_EQ(back[f].pose.translation, frames[f].pose.translation);
    EXPECT_LT(std::abs(std::abs(back[f].pose.rotation.dot(frames[f].pose.rotation)) - 1.0), 1e-15);
    EXPECT_EQ(back[f].points, frames[f].points);
    ASSERT_EQ(back[f].detections.size(), frames[f].detections.size());
    for (std::size_t i = 0; i < frames[f].detections.size(); ++i) {
      EXPECT_EQ(back[f].detections[i].box, frames[f].detections[i].box);
      EXPECT_EQ(back[f].detections[i].scores, frames[f].detections[i].scores);
      EXPECT_EQ(back[f].detections[i].azimuth, frames[f].detections[i].azimuth);
    }
  }
  // Writing the decoded frames again reproduces the files byte for byte.
  TempDir e("roundtrip2");
  write_sequence(e.path, back);
  EXPECT_EQ(read_file(d.path / "points.jsonl"), read_file(e.path / "points.jsonl"));
  EXPECT_EQ(read_file(d.path / "detections.jsonl"), read_file(e.path / "detections.jsonl"));
}

TEST(StateLog, EmptyStateLine) {
  EXPECT_EQ(encode_state_line(FrameSnapshot{12, {}}), "{\"frame\":12,\"objects\":[]}");
}

TEST(StateLog, FieldOrderAndPrecision) {
  FrameSnapshot s{3, {{5, "chair", 0.25, Cuboid{Vec3(1.0 / 3.0, 2, 0.5), -0.5, Vec3(0.5, 0.5, 0.9)},
                       VisibilityKind::Occluded, Memory::LongTerm}}};
  const std::string line = encode_state_line(s);
  EXPECT_EQ(line,
            "{\"frame\":3,\"objects\":[{\"id\":5,\"category\":\"chair\",\"confidence\":0.25,"
            "\"center\":[0.33333333333333331,2,0.5],\"yaw\":-0.5,\"dims\":[0.5,0.5,0.90000000000000002],"
            "\"status\":\"occluded\",\"memory\":\"long_term\"}]}");
}

TEST(StateLog, RandomRoundTrip) {
  std::mt19937_64 rng(41);
  std::vector<FrameSnapshot> log;
  const std::vector<std::string> names{"car", "chair", "person \"x\""};
  for (int f = 0; f < 20; ++f) {
    FrameSnapshot s;
    s.frame = f;
    for (int i = 0; i < static_cast<int>(rng() % 4); ++i) {
      ObjectSnapshot o;
      o.id = static_cast<int>(rng() % 100);
      o.category = names[rng() % names.size()];
      o.confidence = test::uniform(rng, 0, 1);
      o.cuboid = test::random_cuboid(rng, 10);
      o.status = static_cast<VisibilityKind>(rng() % 3);
      o.memory = static_cast<Memory>(rng() % 2);
      s.objects.push_back(o);
    }
    log.push_back(s);
  }
  TempDir d("statelog");
  write_state_log(d.path / "log.jsonl", log);
  EXPECT_EQ(read_state_log(d.path / "log.jsonl"), log);
  write_state_log(d.path / "log2.jsonl", read_state_log(d.path / "log.jsonl"));
  EXPECT_EQ(read_file(d.path / "log.jsonl"), read_file(d.path / "log2.jsonl"));
}

TEST(StateLog, RefusesNonFinite) {
  FrameSnapshot s{0, {{0, "car", std::numeric_limits<double>::quiet_NaN(), Cuboid{}, VisibilityKind::Visible,
                       Memory::ShortTerm}}};
  EXPECT_THROW(encode_state_line(s), FormatError);
}

TEST(GroundTruth, RoundTripAndRejectsMoving) {
  TempDir d("gt");
  const std::vector<GroundTruthObject> gt{{0, "car", Cuboid{Vec3(1, 2, 0.75), 0.3, Vec3(1.8, 4.2, 1.5)}, true},
                                          {4, "chair", Cuboid{Vec3(-1, 0, 0.45), -2.0, Vec3(0.5, 0.5, 0.9)}, true}};
  write_ground_truth(d.path / "gt.jsonl", gt);
  const auto back = read_ground_truth(d.path / "gt.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].id, 4);
  EXPECT_EQ(back[1].category, "chair");
  EXPECT_EQ(back[1].cuboid.center, gt[1].cuboid.center);
  EXPECT_EQ(back[1].cuboid.dims, gt[1].cuboid.dims);
  d.write("moving.jsonl", "{\"id\":0,\"category\":\"car\",\"center\":[0,0,0],\"yaw\":0,\"dims\":[1,1,1],\"static\":false}\n");
  EXPECT_THROW(read_ground_truth(d.path / "moving.jsonl"), FormatError);
}

TEST(Visibility, RoundTrip) {
  TempDir d("vis");
  const std::vector<VisibilityRecord> v{{0, 1, {VisibilityKind::Visible, 0.2}},
                                        {0, 2, {VisibilityKind::Occluded, 0.96}},
                                        {1, 1, {VisibilityKind::OutOfView, 0.0}}};
  write_visibility(d.path / "v.jsonl", v);
  const auto back = read_visibility(d.path / "v.jsonl");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(back[i].frame, v[i].frame);
    EXPECT_EQ(back[i].id, v[i].id);
    EXPECT_EQ(back[i].status, v[i].status);
  }
}

TEST(Categories, RoundTripDefaults) {
  const CategorySet cats = default_categories();
  std::istringstream in(encode_categories(cats));
  const CategorySet back = parse_categories(in);
  ASSERT_EQ(back.size(), cats.size());
  for (std::size_t k = 0; k < cats.size(); ++k) {
    EXPECT_EQ(back[k].id, cats[k].id);
    EXPECT_EQ(back[k].name, cats[k].name);
    EXPECT_EQ(back[k].log_dims_mean, cats[k].log_dims_mean);
    EXPECT_EQ(back[k].log_dims_cov, cats[k].log_dims_cov);
    EXPECT_EQ(back[k].score_gate, cats[k].score_gate);
    EXPECT_EQ(back[k].process_noise, cats[k].process_noise);
    EXPECT_EQ(back[k].init_cov, cats[k].init_cov);
  }
}

TEST(Categories, MinimalFileUsesDefaults) {
  std::istringstream in(
      "# two classes\n[box]\nid = 0\nlog_dims_mean = [0, 0, 0]\nlog_dims_cov = [0.1, 0.1, 0.1]\n\n"
      "[tall]\nid = 1\nlog_dims_mean = [0, 0, 0.5]  # taller\nlog_dims_cov = [0.1, 0.1, 0.1]\nscore_gate = 0.5\n");
  const CategorySet cats = parse_categories(in);
  ASSERT_EQ(cats.size(), 2u);
  EXPECT_EQ(cats[1].name, "tall");
  EXPECT_DOUBLE_EQ(cats[1].log_dims_mean.z(), 0.5);
  EXPECT_DOUBLE_EQ(cats[1].score_gate, 0.5);
  EXPECT_EQ(cats[0].init_cov, default_init_cov());
}

TEST(Categories, RejectsMalformed) {
  for (const char* text : {"[a]\nid = 1\nlog_dims_mean = [0,0,0]\nlog_dims_cov = [1,1,1]\n",  // ids must start at 0
                           "[a]\nid = 0\nlog_dims_mean = [0,0]\nlog_dims_cov = [1,1,1]\n",
                           "[a]\nid = 0\nlog_dims_mean = [0,0,0]\nlog_dims_cov = [-1,1,1]\n",
                           "[a]\nid = 0\nlog_dims_mean = [0,0,0]\nlog_dims_cov = [1,1,1]\nscore_gate = 2\n",
                           "[a]\nid = 0\nbogus = 3\n", "id = 0\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_categories(in), FormatError) << text;
  }
}

TEST(FilterConfigKeys, LayeringAndValidation) {
  FilterConfig cfg;
  set_filter_config(cfg, "tau_dom", "0.9");
  set_filter_config(cfg, "confirm_hits", "4");
  set_filter_config(cfg, "visibility_grid", "7");
  EXPECT_DOUBLE_EQ(cfg.tau_dom, 0.9);
  EXPECT_EQ(cfg.confirm_hits, 4);
  EXPECT_EQ(cfg.visibility.grid, 7);
  EXPECT_THROW(set_filter_config(cfg, "confirm_hits", "2.5"), std::invalid_argument);
  EXPECT_THROW(set_filter_config(cfg, "nope", "1"), std::invalid_argument);
  FilterConfig other;
  apply_filter_config(other, filter_config_to_json(cfg));
  EXPECT_EQ(filter_config_to_json(other).dump(), filter_config_to_json(cfg).dump());
  cfg.tau_dom = 1.5;
  EXPECT_THROW(validate_filter_config(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace vis3d
