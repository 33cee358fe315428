// Command-line front end: simulate | run | eval | plot.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "vis3d/vis3d.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>

namespace {

using namespace vis3d;
namespace fs = std::filesystem;

/// Usage and configuration problems; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const char* what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError(std::string("bad ") + what + " value '" + s + "'");
  return v;
}

std::string option_name(const std::string& key) {
  std::string o = key;
  std::replace(o.begin(), o.end(), '_', '-');
  return "--" + o;
}

std::string env_name(const std::string& key) {
  std::string e = "VIS3D_" + key;
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return e;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  SceneConfig cfg;
  try {
    if (!a.config.empty()) cfg = read_scene_config(a.config);
    else cfg = scenario(a.scenario);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.seed) cfg.seed = *a.seed;
  SimulatedSequence seq;
  try {
    seq = simulate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_simulation(a.out, seq);

  std::map<std::string, int> per_category;
  for (const auto& o : seq.world.objects) ++per_category[o.category];
  std::size_t detections = 0;
  for (const auto& f : seq.frames) detections += f.detections.size();
  std::cout << "scene: " << seq.world.objects.size() << " objects, " << seq.frames.size() << " frames, "
            << detections << " detections\n";
  for (const auto& [name, n] : per_category) std::cout << "  " << name << ": " << n << "\n";
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string in, categories, out, config, timing;
  std::optional<int> frames;
  std::map<std::string, std::string> flags;  // filter key -> value given on the command line
};

FilterConfig layered_filter_config(const RunArgs& a) {
  FilterConfig cfg;
  try {
    if (!a.config.empty()) {
      std::ifstream in(a.config);
      if (!in) throw UsageError("cannot open config " + a.config);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(a.config + ": " + e.what());
      }
      if (j.contains("filter")) j = j.at("filter");
      apply_filter_config(cfg, j);
    }
    for (const ConfigKey& k : filter_config_keys())
      if (const char* v = std::getenv(env_name(k.name).c_str())) set_filter_config(cfg, k.name, detail::trim(v));
    for (const auto& [key, value] : a.flags) set_filter_config(cfg, key, value);
    validate_filter_config(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int cmd_run(const RunArgs& a) {
  const FilterConfig cfg = layered_filter_config(a);
  const fs::path categories_path = a.categories.empty() ? fs::path(a.in) / "categories.toml" : fs::path(a.categories);
  CategorySet categories;
  try {
    categories = read_categories(categories_path);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  if (a.frames && *a.frames < 0) throw UsageError("--frames must be >= 0");

  const fs::path out(a.out);
  const fs::path out_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  fs::create_directories(out_dir);
  {
    nlohmann::ordered_json echo;
    echo["input"] = a.in;
    echo["categories"] = categories_path.string();
    echo["frames"] = a.frames ? nlohmann::ordered_json(*a.frames) : nlohmann::ordered_json(nullptr);
    echo["filter"] = filter_config_to_json(cfg);
    auto f = detail::open_out(out_dir / "run_config.json");
    f << echo.dump(2) << '\n';
    detail::check_written(f, out_dir / "run_config.json");
  }

  const fs::path timing_path = a.timing.empty() ? fs::path(out.string() + ".timing.jsonl") : fs::path(a.timing);
  StateLogWriter log(out);
  auto timing = detail::open_out(timing_path);
  SemanticMapper mapper(categories, cfg);
  SequenceReader reader(a.in, categories.size());
  int n = 0;
  while (!a.frames || n < *a.frames) {
    auto frame = reader.next();
    if (!frame) break;
    const auto t0 = std::chrono::steady_clock::now();
    const FrameSnapshot snap = mapper.step(*frame);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.write(snap);
    timing << "{\"frame\":" << frame->frame << ",\"ms\":" << format_number(ms) << "}\n";
    detail::check_written(timing, timing_path);
    ++n;
  }
  std::cout << "processed " << n << " frames; " << mapper.snapshot(-1).objects.size() << " confirmed objects\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string est, gt, vis, mode = "fnl", pos = "0.5,1.0,1.5", ang = "30,45,none", out;
  bool fold_yaw = false;
};

EvalThresholds parse_thresholds(const std::string& pos, const std::string& ang) {
  EvalThresholds th;
  th.position.clear();
  th.orientation.clear();
  for (const auto& p : split(pos, ',')) th.position.push_back(parse_double(p, "--pos"));
  for (const auto& s : split(ang, ',')) {
    if (s == "none") th.orientation.push_back(std::nullopt);
    else th.orientation.push_back(parse_double(s, "--ang") * kPi / 180.0);
  }
  if (th.position.empty() || th.orientation.empty()) throw UsageError("empty threshold list");
  for (std::size_t i = 0; i < th.position.size(); ++i)
    if (!(th.position[i] > 0) || (i && !(th.position[i] > th.position[i - 1])))
      throw UsageError("--pos must be positive and ascending");
  for (std::size_t i = 0; i < th.orientation.size(); ++i) {
    const auto& o = th.orientation[i];
    if (i && !th.orientation[i - 1]) throw UsageError("--ang: 'none' must come last");
    if (o && (!(*o > 0) || (i && !(*o > *th.orientation[i - 1]))))
      throw UsageError("--ang must be positive and ascending");
  }
  return th;
}

int cmd_eval(const EvalArgs& a) {
  const EvalThresholds th = parse_thresholds(a.pos, a.ang);
  EvalMode mode;
  if (a.mode == "inst") mode = EvalMode::Inst;
  else if (a.mode == "fnl") mode = EvalMode::Fnl;
  else throw UsageError("--mode must be inst or fnl");
  const auto log = read_state_log(a.est);
  const auto gt = read_ground_truth(a.gt);
  const auto vis = read_visibility(a.vis);
  MatchOptions opt;
  opt.fold_yaw = a.fold_yaw;
  const EvalRecord r = evaluate_log(log, gt, vis, mode, th, opt);
  std::cout << render_table(r);
  if (!a.out.empty()) {
    auto f = detail::open_out(a.out);
    f << render_csv(r);
    detail::check_written(f, a.out);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string est, gt, poses, out;
  std::optional<int> frame;
  bool all = false;
};

std::vector<std::pair<int, Vec3>> read_positions(const fs::path& path) {
  std::vector<std::pair<int, Vec3>> out;
  detail::JsonLines in(path);
  while (auto j = in.next())
    out.push_back(in.guarded([&] {
      const RigidPose g = decode_pose(*j, nullptr, nullptr);
      return std::make_pair(detail::integer(*j, "frame"), g.translation);
    }));
  return out;
}

fs::path numbered(const fs::path& out, int frame, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%0*d", width, frame);
  const fs::path ext = out.has_extension() ? out.extension() : fs::path(".svg");
  return out.parent_path() / (out.stem().string() + buf + ext.string());
}

int cmd_plot(const PlotArgs& a) {
  if (a.all == a.frame.has_value()) throw UsageError("exactly one of --frame or --all is required");
  std::vector<GroundTruthObject> gt;
  if (!a.gt.empty()) gt = read_ground_truth(a.gt);
  std::vector<FrameSnapshot> log;
  if (!a.est.empty()) log = read_state_log(a.est);
  std::vector<std::pair<int, Vec3>> positions;
  if (!a.poses.empty()) positions = read_positions(a.poses);

  auto render = [&](int frame) {
    std::vector<Estimate> est;
    for (const auto& s : log)
      if (s.frame == frame)
        for (const auto& o : s.objects) est.push_back(to_estimate(o));
    std::vector<Vec3> traj;
    for (const auto& [f, p] : positions)
      if (f <= frame) traj.push_back(p);
    return render_top_view(gt, est, traj, {}, "frame " + std::to_string(frame));
  };
  auto write = [](const fs::path& path, const std::string& svg) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto f = detail::open_out(path);
    f << svg;
    detail::check_written(f, path);
  };

  if (a.frame) {
    write(a.out, render(*a.frame));
    return 0;
  }
  std::set<int> frames;
  for (const auto& s : log) frames.insert(s.frame);
  for (const auto& p : positions) frames.insert(p.first);
  if (frames.empty()) frames.insert(0);
  const int width = std::max(4, static_cast<int>(std::to_string(*frames.rbegin()).size()));
  for (int f : frames) write(numbered(a.out, f, width), render(f));
  std::cout << "wrote " << frames.size() << " plots\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-level semantic mapping from detections and poses"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Render a synthetic scene into stream files");
  auto* scen = s->add_option("--scenario", sim.scenario, "Named scenario")
                   ->check(CLI::IsMember(scenario_names()));
  auto* conf = s->add_option("--config", sim.config, "JSON scene file")->check(CLI::ExistingFile);
  scen->excludes(conf);
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--seed", sim.seed, "Override the scene seed");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run the filter over a stream directory");
  r->add_option("--in", run.in, "Input directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--categories", run.categories, "Category file (default: <in>/categories.toml)");
  r->add_option("--out", run.out, "State log path")->required();
  r->add_option("--config", run.config, "JSON filter config (lowest precedence)")->check(CLI::ExistingFile);
  r->add_option("--timing", run.timing, "Per-frame wall time log (default: <out>.timing.jsonl)");
  r->add_option("--frames", run.frames, "Process only the first N frames");
  std::map<std::string, std::string> flag_values;
  for (const ConfigKey& k : filter_config_keys())
    r->add_option(option_name(k.name), flag_values[k.name], std::string("Filter ") + k.name + " (env " + env_name(k.name) + ")");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a state log against ground truth");
  e->add_option("--est", ev.est, "State log")->required()->check(CLI::ExistingFile);
  e->add_option("--gt", ev.gt, "Ground truth")->required()->check(CLI::ExistingFile);
  e->add_option("--vis", ev.vis, "Visibility oracle")->required()->check(CLI::ExistingFile);
  e->add_option("--mode", ev.mode, "inst or fnl")->check(CLI::IsMember({"inst", "fnl"}));
  e->add_option("--pos", ev.pos, "Position thresholds, meters");
  e->add_option("--ang", ev.ang, "Orientation thresholds, degrees or none");
  e->add_option("--out", ev.out, "CSV report");
  e->add_flag("--fold-yaw", ev.fold_yaw, "Treat yaw and yaw + 180 degrees as equal");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Top-view SVG of estimates and ground truth");
  p->add_option("--est", pl.est, "State log")->check(CLI::ExistingFile);
  p->add_option("--gt", pl.gt, "Ground truth")->check(CLI::ExistingFile);
  p->add_option("--poses", pl.poses, "Pose stream for the trajectory")->check(CLI::ExistingFile);
  auto* pf = p->add_option("--frame", pl.frame, "Frame to draw");
  auto* pa = p->add_flag("--all", pl.all, "One SVG per frame, numbered");
  pf->excludes(pa);
  p->add_option("--out", pl.out, "SVG path (pattern base with --all)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) {
      if (sim.scenario.empty() && sim.config.empty()) throw UsageError("one of --scenario or --config is required");
      return cmd_simulate(sim);
    }
    if (r->parsed()) {
      for (const auto& [key, value] : flag_values)
        if (r->count(option_name(key))) run.flags[key] = value;
      return cmd_run(run);
    }
    if (e->parsed()) return cmd_eval(ev);
    if (p->parsed()) return cmd_plot(pl);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
