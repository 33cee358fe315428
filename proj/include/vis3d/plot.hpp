#pragma once

// Top-view SVG of ground-truth footprints, estimated footprints and the
// camera trajectory. World +y points up in the drawing.

#include "vis3d/evaluation.hpp"

namespace vis3d {

struct PlotOptions {
  double pixels_per_meter = 40.0;
  double margin_m = 1.0;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// Deterministic for identical inputs. Ground truth is drawn blue,
/// estimates green and dashed, the trajectory as a gray polyline.
inline std::string render_top_view(std::span<const GroundTruthObject> gt, std::span<const Estimate> estimates,
                                   std::span<const Vec3> trajectory, const PlotOptions& opt = {},
                                   const std::string& title = "") {
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  auto grow = [&](const Vec2& p) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  };
  for (const auto& o : gt)
    for (const Vec2& p : detail::footprint(o.cuboid)) grow(p);
  for (const auto& e : estimates)
    for (const Vec2& p : detail::footprint(e.cuboid)) grow(p);
  for (const Vec3& p : trajectory) grow(p.head<2>());
  if (!std::isfinite(xmin)) xmin = ymin = -1.0, xmax = ymax = 1.0;
  xmin -= opt.margin_m;
  ymin -= opt.margin_m;
  xmax += opt.margin_m;
  ymax += opt.margin_m;

  const double s = opt.pixels_per_meter;
  const double legend_h = 60.0;
  const double w = (xmax - xmin) * s, h = (ymax - ymin) * s + legend_h;
  auto px = [&](const Vec2& p) { return detail::svg_num((p.x() - xmin) * s) + "," + detail::svg_num((ymax - p.y()) * s); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(w) + "\" height=\"" +
         detail::svg_num(h) + "\" viewBox=\"0 0 " + detail::svg_num(w) + " " + detail::svg_num(h) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + detail::svg_num(w) + "\" height=\"" + detail::svg_num(h) +
         "\" fill=\"white\"/>\n";
  if (!title.empty()) out += "<title>" + title + "</title>\n";

  if (trajectory.size() >= 2) {
    out += "<polyline class=\"trajectory\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < trajectory.size(); ++i) out += (i ? " " : "") + px(trajectory[i].head<2>());
    out += "\"/>\n";
  } else if (trajectory.size() == 1) {
    const std::string p = px(trajectory[0].head<2>());
    const auto comma = p.find(',');
    out += "<circle class=\"trajectory\" cx=\"" + p.substr(0, comma) + "\" cy=\"" + p.substr(comma + 1) +
           "\" r=\"3\" fill=\"#888888\"/>\n";
  }
  auto polygon = [&](const Cuboid& c, const char* cls, const char* style) {
    std::string r = "<polygon class=\"" + std::string(cls) + "\" " + style + " points=\"";
    const auto fp = detail::footprint(c);
    for (std::size_t i = 0; i < fp.size(); ++i) r += (i ? " " : "") + px(fp[i]);
    return r + "\"/>\n";
  };
  for (const auto& o : gt)
    out += polygon(o.cuboid, "gt", "fill=\"#1f4fd6\" fill-opacity=\"0.15\" stroke=\"#1f4fd6\" stroke-width=\"2\"");
  for (const auto& e : estimates)
    out += polygon(e.cuboid, "estimate",
                   "fill=\"none\" stroke=\"#1a9e2c\" stroke-width=\"2\" stroke-dasharray=\"6,3\"");

  // Legend and a one-meter scale bar along the bottom edge.
  const double y0 = h - legend_h + 15.0;
  out += "<rect x=\"10\" y=\"" + detail::svg_num(y0) +
         "\" width=\"14\" height=\"10\" fill=\"#1f4fd6\" fill-opacity=\"0.15\" stroke=\"#1f4fd6\"/>\n";
  out += "<text x=\"30\" y=\"" + detail::svg_num(y0 + 10) + "\" font-size=\"12\">ground truth</text>\n";
  out += "<rect x=\"120\" y=\"" + detail::svg_num(y0) +
         "\" width=\"14\" height=\"10\" fill=\"none\" stroke=\"#1a9e2c\" stroke-dasharray=\"6,3\"/>\n";
  out += "<text x=\"140\" y=\"" + detail::svg_num(y0 + 10) + "\" font-size=\"12\">estimate</text>\n";
  out += "<line x1=\"210\" y1=\"" + detail::svg_num(y0 + 5) + "\" x2=\"230\" y2=\"" + detail::svg_num(y0 + 5) +
         "\" stroke=\"#888888\" stroke-width=\"1.5\"/>\n";
  out += "<text x=\"236\" y=\"" + detail::svg_num(y0 + 10) + "\" font-size=\"12\">trajectory</text>\n";
  const double y1 = y0 + 25.0;
  out += "<line class=\"scale\" x1=\"10\" y1=\"" + detail::svg_num(y1) + "\" x2=\"" + detail::svg_num(10 + s) +
         "\" y2=\"" + detail::svg_num(y1) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  out += "<text x=\"" + detail::svg_num(16 + s) + "\" y=\"" + detail::svg_num(y1 + 4) + "\" font-size=\"12\">1 m = " +
         detail::svg_num(s) + " px</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace vis3d
