#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "locnav/eval.hpp"
#include "locnav/network.hpp"
#include "locnav/world.hpp"

namespace locnav {

namespace detail {

inline std::string fmt2(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace detail

// Top view of one episode plus a per-step error chart underneath. Robot and
// pedestrian tracks are <polyline> elements so their count and vertex counts
// stay machine-checkable; chart curves are <path> elements.
inline std::string trajectory_svg(const EpisodeRecord& rec, const ScenarioSpec& scenario) {
  if (rec.rows.empty()) throw ContractError("trajectory_svg: episode has no steps");
  using detail::fmt2;
  const Rect& b = scenario.world.bounds;
  const double scale = 40.0, pad = 12.0;
  const double map_w = b.width() * scale, map_h = b.height() * scale;
  const double chart_gap = 28.0, chart_h = 120.0;
  const double chart_top = pad + map_h + chart_gap;
  const double width = map_w + 2.0 * pad;
  const double height = chart_top + chart_h + pad;

  auto sx = [&](double x) { return pad + (x - b.xmin) * scale; };
  auto sy = [&](double y) { return pad + (b.ymax - y) * scale; };

  std::string s;
  s += "<svg xmlns='http://www.w3.org/2000/svg' width='" + fmt2(width) + "' height='" +
       fmt2(height) + "' viewBox='0 0 " + fmt2(width) + " " + fmt2(height) + "'>\n";
  s += "<rect x='" + fmt2(pad) + "' y='" + fmt2(pad) + "' width='" + fmt2(map_w) +
       "' height='" + fmt2(map_h) + "' fill='#fafafa' stroke='#999'/>\n";

  for (const Segment& seg : scenario.world.segments)
    s += "<line x1='" + fmt2(sx(seg.a.x)) + "' y1='" + fmt2(sy(seg.a.y)) + "' x2='" +
         fmt2(sx(seg.b.x)) + "' y2='" + fmt2(sy(seg.b.y)) +
         "' stroke='#333' stroke-width='2'/>\n";

  size_t n_peds = rec.rows.front().ped_positions.size();
  for (size_t k = 0; k < n_peds; ++k) {
    s += "<polyline class='ped' fill='none' stroke='#c0504d' stroke-width='1' points='";
    for (size_t i = 0; i < rec.rows.size(); ++i) {
      const Vec2& p = rec.rows[i].ped_positions[k];
      if (i > 0) s += " ";
      s += fmt2(sx(p.x)) + "," + fmt2(sy(p.y));
    }
    s += "'/>\n";
  }

  s += "<polyline class='robot' fill='none' stroke='#1f6fd0' stroke-width='1.5' points='";
  for (size_t i = 0; i < rec.rows.size(); ++i) {
    if (i > 0) s += " ";
    s += fmt2(sx(rec.rows[i].gt.x)) + "," + fmt2(sy(rec.rows[i].gt.y));
  }
  s += "'/>\n";

  s += "<circle class='start' cx='" + fmt2(sx(rec.start.x)) + "' cy='" + fmt2(sy(rec.start.y)) +
       "' r='4' fill='#2a9d2a'/>\n";
  s += "<circle class='goal' cx='" + fmt2(sx(rec.goal.x)) + "' cy='" + fmt2(sy(rec.goal.y)) +
       "' r='5' fill='none' stroke='#2a9d2a' stroke-width='2'/>\n";

  // Error chart: position error in meters, yaw error in radians, both scaled
  // by their own maxima so the curves share the panel.
  std::vector<double> ep, ea;
  double ep_max = 1e-6, ea_max = 1e-6;
  for (const StepRow& r : rec.rows) {
    ep.push_back((r.est.position() - r.gt.position()).norm());
    ea.push_back(std::abs(wrap_angle(r.est.yaw - r.gt.yaw)));
    ep_max = std::max(ep_max, ep.back());
    ea_max = std::max(ea_max, ea.back());
  }
  size_t n = rec.rows.size();
  auto cx = [&](size_t i) {
    return n < 2 ? pad : pad + map_w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto cy = [&](double v, double vmax) { return chart_top + chart_h * (1.0 - v / vmax); };

  s += "<rect x='" + fmt2(pad) + "' y='" + fmt2(chart_top) + "' width='" + fmt2(map_w) +
       "' height='" + fmt2(chart_h) + "' fill='#fafafa' stroke='#999'/>\n";
  auto curve = [&](const std::vector<double>& v, double vmax, const char* cls,
                   const char* color) {
    std::string d = "M " + fmt2(cx(0)) + " " + fmt2(cy(v[0], vmax));
    for (size_t i = 1; i < v.size(); ++i)
      d += " L " + fmt2(cx(i)) + " " + fmt2(cy(v[i], vmax));
    s += "<path class='" + std::string(cls) + "' d='" + d + "' fill='none' stroke='" + color +
         "' stroke-width='1'/>\n";
  };
  curve(ep, ep_max, "err-pos", "#1f6fd0");
  curve(ea, ea_max, "err-yaw", "#c0504d");
  s += "<text x='" + fmt2(pad + 4.0) + "' y='" + fmt2(chart_top - 8.0) +
       "' font-size='11' fill='#333'>pose error, position (blue, max " + fmt2(ep_max) +
       " m) and yaw (red, max " + fmt2(ea_max) + " rad)</text>\n";
  s += "</svg>\n";
  return s;
}

inline void render_trajectory(const EpisodeRecord& rec, const ScenarioSpec& scenario,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write svg '" + path + "'");
  out << trajectory_svg(rec, scenario);
}

// Diverging color ramp for activation panels: low maps to blue, the panel
// midpoint to white-ish green, high to red.
inline std::array<uint8_t, 3> activation_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ch = [](double v) { return static_cast<uint8_t>(std::lround(255.0 * v)); };
  return {ch(t), ch(1.0 - std::abs(2.0 * t - 1.0)), ch(1.0 - t)};
}

// One panel per output channel of the first scan convolution. Panel rows are
// identical strips: the horizontal axis is the beam-angle-ordered output
// position, color the per-panel min-max normalized activation.
struct ActivationGrid {
  int channels = 0;
  int length = 0;
  std::vector<double> activations;  // channels x length
  int cols = 4;
  int rows = 0;
  int panel_h = 16;
  std::vector<uint8_t> rgb;

  int width() const { return cols * (length + 1) + 1; }
  int height() const { return rows * (panel_h + 1) + 1; }
  double value(int channel, int pos) const {
    if (channel < 0 || channel >= channels || pos < 0 || pos >= length)
      throw ContractError("activation value lookup out of range");
    return activations[static_cast<size_t>(channel) * length + pos];
  }
};

inline ActivationGrid activation_grid(const PolicyValueNet& net, const ObservationBundle& obs) {
  ObsBatch batch = batch_observations(net.variant(), std::vector<ObservationBundle>{obs});
  Graph g;
  const Tensor& act = g.value(net.scan_conv1(g, batch));
  if (act.shape.size() != 3 || act.shape[0] != 1)
    throw ContractError("activation_grid: unexpected conv output shape " + act.shape_str());

  ActivationGrid grid;
  grid.channels = act.shape[1];
  grid.length = act.shape[2];
  grid.rows = (grid.channels + grid.cols - 1) / grid.cols;
  grid.activations.resize(static_cast<size_t>(grid.channels) * grid.length);
  for (int c = 0; c < grid.channels; ++c)
    for (int x = 0; x < grid.length; ++x)
      grid.activations[static_cast<size_t>(c) * grid.length + x] =
          static_cast<double>(act.data[static_cast<size_t>(c) * grid.length + x]);

  grid.rgb.assign(static_cast<size_t>(3) * grid.width() * grid.height(), 0);
  auto put = [&](int x, int y, std::array<uint8_t, 3> c) {
    size_t at = 3 * (static_cast<size_t>(y) * grid.width() + x);
    grid.rgb[at] = c[0];
    grid.rgb[at + 1] = c[1];
    grid.rgb[at + 2] = c[2];
  };

  for (int c = 0; c < grid.channels; ++c) {
    double lo = grid.value(c, 0), hi = lo;
    for (int x = 1; x < grid.length; ++x) {
      lo = std::min(lo, grid.value(c, x));
      hi = std::max(hi, grid.value(c, x));
    }
    int px0 = 1 + (c % grid.cols) * (grid.length + 1);
    int py0 = 1 + (c / grid.cols) * (grid.panel_h + 1);
    for (int x = 0; x < grid.length; ++x) {
      double t = hi > lo ? (grid.value(c, x) - lo) / (hi - lo) : 0.5;
      std::array<uint8_t, 3> color = activation_color(t);
      for (int y = 0; y < grid.panel_h; ++y) put(px0 + x, py0 + y, color);
    }
  }
  return grid;
}

inline void write_ppm(const std::string& path, const ActivationGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write ppm '" + path + "'");
  out << "P6\n" << grid.width() << " " << grid.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(grid.rgb.data()),
            static_cast<std::streamsize>(grid.rgb.size()));
}

inline ActivationGrid render_activations(const PolicyValueNet& net, const ObservationBundle& obs,
                                         const std::string& path) {
  ActivationGrid grid = activation_grid(net, obs);
  write_ppm(path, grid);
  return grid;
}

}  // namespace locnav
