#pragma once

#include <atomic>
#include <cmath>
#include <memory>
#include <set>
#include <tuple>
#include <vector>

#include "locnav/geometry.hpp"
#include "locnav/rng.hpp"
#include "locnav/scan.hpp"
#include "locnav/sensors.hpp"
#include "locnav/world.hpp"

namespace locnav {

struct Particle {
  Pose2D pose;
  double weight = 0.0;
};

// Lazily filled table of grid raycast results, quantised to cell_size
// positions and angle bins. Values are a pure function of (cell, bin), so the
// fill order never matters; entries are atomics so concurrent filters can
// share one table (a racing recompute stores the same value).
class ExpectedScanCache {
 public:
  ExpectedScanCache(const OccupancyGrid& grid, double cell_size, int angle_bins, double max_range)
      : grid_(grid),
        cell_size_(cell_size),
        angle_bins_(angle_bins),
        max_range_(max_range),
        quant_(max_range / 60000.0) {
    if (!(cell_size > 0.0) || angle_bins < 4)
      throw ContractError("scan cache: bad quantisation parameters");
    nx_ = std::max(1, static_cast<int>(std::ceil(grid.width * grid.resolution / cell_size)));
    ny_ = std::max(1, static_cast<int>(std::ceil(grid.height * grid.resolution / cell_size)));
    size_t n = static_cast<size_t>(nx_) * ny_ * angle_bins_;
    table_ = std::make_unique<std::atomic<uint16_t>[]>(n);
    for (size_t i = 0; i < n; ++i) table_[i].store(kUnset, std::memory_order_relaxed);
  }

  double lookup(Vec2 p, double angle) const {
    int ix = std::clamp(static_cast<int>(std::floor((p.x - grid_.origin.x) / cell_size_)), 0,
                        nx_ - 1);
    int iy = std::clamp(static_cast<int>(std::floor((p.y - grid_.origin.y) / cell_size_)), 0,
                        ny_ - 1);
    double a = angle - 2.0 * kPi * std::floor(angle / (2.0 * kPi));
    int bin = static_cast<int>(a / (2.0 * kPi) * angle_bins_) % angle_bins_;
    size_t idx = (static_cast<size_t>(iy) * nx_ + ix) * angle_bins_ + bin;
    uint16_t v = table_[idx].load(std::memory_order_relaxed);
    if (v == kUnset) {
      Vec2 center{grid_.origin.x + (ix + 0.5) * cell_size_,
                  grid_.origin.y + (iy + 0.5) * cell_size_};
      double bin_angle = (bin + 0.5) * 2.0 * kPi / angle_bins_;
      double r = grid_.raycast(center, bin_angle, max_range_);
      v = static_cast<uint16_t>(std::min(r / quant_, 59999.0));
      table_[idx].store(v, std::memory_order_relaxed);
    }
    return std::min(v * quant_, max_range_);
  }

  const OccupancyGrid& grid() const { return grid_; }

 private:
  static constexpr uint16_t kUnset = 0xFFFF;
  const OccupancyGrid& grid_;
  double cell_size_;
  int angle_bins_;
  double max_range_;
  double quant_;
  int nx_ = 0, ny_ = 0;
  mutable std::unique_ptr<std::atomic<uint16_t>[]> table_;
};

struct ParticleSet {
  std::vector<Particle> particles;
  std::shared_ptr<ExpectedScanCache> expected_scan_cache;

  void normalize() {
    double total = 0.0;
    for (const Particle& p : particles) total += p.weight;
    if (!(total > 0.0))
      throw DegenerateBelief("particle weights sum to zero; belief collapsed");
    for (Particle& p : particles) p.weight /= total;
  }
};

struct BeliefSummary {
  Pose2D mean;
  double var_x = 0.0;
  double var_y = 0.0;
  double var_yaw = 0.0;
};

struct AmclParams {
  int min_particles = 500;
  int max_particles = 2000;
  double kld_epsilon = 0.05;
  double kld_delta = 0.99;
  double kld_bin_xy = 0.5;          // m
  double kld_bin_yaw = kPi / 18.0;  // 10 degrees
  double jitter_x = 0.02;           // additive motion noise, m
  double jitter_y = 0.02;
  double jitter_yaw = 0.01;  // rad
  OdomNoiseParams motion;    // multiplicative odometry gains
  // Weighting model. Broader than the simulated sensor on purpose: the
  // weighting sigma has to absorb map discretisation and pedestrian clutter,
  // not just the raw beam noise.
  BeamModelParams model{0.95, 0.0, 0.01, 0.04, 0.15, 12.0, 0.01};
  int stride = 12;
  bool use_range_cache = true;
  double cache_cell = 0.1;  // m
  int cache_angle_bins = 360;
  double init_spread_x = 0.2;  // m, initial belief scatter around the start pose
  double init_spread_y = 0.2;
  double init_spread_yaw = 0.1;  // rad
  LaserConfig laser;

  void validate() const {
    if (min_particles < 1 || max_particles < min_particles)
      throw ValidationError("amcl: need 1 <= min_particles <= max_particles");
    if (!(kld_epsilon > 0.0) || !(kld_delta > 0.0) || kld_delta >= 1.0)
      throw ValidationError("amcl: kld_epsilon > 0 and kld_delta in (0,1) required");
    if (stride < 1) throw ValidationError("amcl: stride must be >= 1");
    model.validate();
    motion.validate();
    laser.validate();
  }

  static AmclParams from_config(const ConfigTable& t) {
    AmclParams p;
    p.min_particles = static_cast<int>(t.get_int("min_particles", p.min_particles));
    p.max_particles = static_cast<int>(t.get_int("max_particles", p.max_particles));
    p.kld_epsilon = t.get_double("kld_epsilon", p.kld_epsilon);
    p.kld_delta = t.get_double("kld_delta", p.kld_delta);
    p.kld_bin_xy = t.get_double("kld_bin_xy", p.kld_bin_xy);
    p.kld_bin_yaw = t.get_double("kld_bin_yaw", p.kld_bin_yaw);
    p.jitter_x = t.get_double("jitter_x", p.jitter_x);
    p.jitter_y = t.get_double("jitter_y", p.jitter_y);
    p.jitter_yaw = t.get_double("jitter_yaw", p.jitter_yaw);
    p.motion.gain_std = t.get_double("motion_gain_std", p.motion.gain_std);
    p.model.z_hit = t.get_double("z_hit", p.model.z_hit);
    p.model.z_max = t.get_double("z_max", p.model.z_max);
    p.model.z_rand = t.get_double("z_rand", p.model.z_rand);
    p.model.sigma_hit = t.get_double("sigma_hit", p.model.sigma_hit);
    p.model.max_range = t.get_double("max_range", p.model.max_range);
    p.stride = static_cast<int>(t.get_int("stride", p.stride));
    p.use_range_cache = t.get_bool("use_range_cache", p.use_range_cache);
    p.cache_cell = t.get_double("cache_cell", p.cache_cell);
    p.cache_angle_bins = static_cast<int>(t.get_int("cache_angle_bins", p.cache_angle_bins));
    p.init_spread_x = t.get_double("init_spread_x", p.init_spread_x);
    p.init_spread_y = t.get_double("init_spread_y", p.init_spread_y);
    p.init_spread_yaw = t.get_double("init_spread_yaw", p.init_spread_yaw);
    p.validate();
    return p;
  }
};

inline ParticleSet init_belief(const Pose2D& pose, double spread_x, double spread_y,
                               double spread_yaw, int n, Rng& rng) {
  if (n < 1) throw ContractError("init_belief: need at least one particle");
  ParticleSet set;
  set.particles.resize(n);
  for (Particle& p : set.particles) {
    p.pose = make_pose(pose.x + rng.normal(0.0, spread_x), pose.y + rng.normal(0.0, spread_y),
                       pose.yaw + rng.normal(0.0, spread_yaw));
    p.weight = 1.0 / n;
  }
  return set;
}

// Advances each particle by the body-frame odometry increment, scaled by
// multiplicative gains and blurred by additive jitter. Weights untouched.
inline void motion_update(ParticleSet& set, const Pose2D& odom_delta, const AmclParams& params,
                          Rng& rng) {
  for (Particle& p : set.particles) {
    double g_trans = rng.normal(params.motion.gain_mean, params.motion.gain_std);
    double g_rot = rng.normal(params.motion.gain_mean, params.motion.gain_std);
    Pose2D d{odom_delta.x * g_trans + rng.normal(0.0, params.jitter_x),
             odom_delta.y * g_trans + rng.normal(0.0, params.jitter_y),
             odom_delta.yaw * g_rot + rng.normal(0.0, params.jitter_yaw)};
    p.pose = compose(p.pose, d);
  }
}

// Expected range of one beam from a hypothetical pose, against the static
// grid only (pedestrians are absorbed by the measurement model).
inline double expected_range(const ParticleSet& set, const OccupancyGrid& grid, Vec2 origin,
                             double angle, const AmclParams& params) {
  if (set.expected_scan_cache) return set.expected_scan_cache->lookup(origin, angle);
  return grid.raycast(origin, angle, params.laser.max_range);
}

inline void measurement_update(ParticleSet& set, const ScanObservation& scan,
                               const OccupancyGrid& grid, const AmclParams& params) {
  if (scan.size() != params.laser.beams)
    throw ContractError("measurement_update: scan has " + std::to_string(scan.size()) +
                        " beams, expected " + std::to_string(params.laser.beams));
  size_t n = set.particles.size();
  std::vector<double> log_lik(n);
  double max_ll = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    const Pose2D& pose = set.particles[i].pose;
    double ll = 0.0;
    for (int b = 0; b < params.laser.beams; b += params.stride) {
      double angle = pose.yaw + params.laser.beam_offset(b);
      double expected = expected_range(set, grid, pose.position(), angle, params);
      ll += std::log(std::max(beam_density(scan.ranges[b], expected, params.model), 1e-300));
    }
    log_lik[i] = ll;
    max_ll = std::max(max_ll, ll);
  }
  for (size_t i = 0; i < n; ++i)
    set.particles[i].weight *= std::exp(log_lik[i] - max_ll);
  set.normalize();
}

inline double effective_sample_size(const ParticleSet& set) {
  double sum_sq = 0.0;
  for (const Particle& p : set.particles) sum_sq += p.weight * p.weight;
  if (!(sum_sq > 0.0)) return 0.0;
  return 1.0 / sum_sq;
}

namespace detail {

// Acklam's rational approximation of the standard normal quantile
// (|relative error| < 1.2e-9), enough for the KLD z-score.
inline double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  if (!(p > 0.0 && p < 1.0)) throw ContractError("normal_quantile: p must be in (0,1)");
  const double p_low = 0.02425;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  double q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Number of occupied histogram bins of the particle cloud.
inline int kld_bin_count(const ParticleSet& set, const AmclParams& params) {
  std::set<std::tuple<int, int, int>> bins;
  for (const Particle& p : set.particles) {
    bins.emplace(static_cast<int>(std::floor(p.pose.x / params.kld_bin_xy)),
                 static_cast<int>(std::floor(p.pose.y / params.kld_bin_xy)),
                 static_cast<int>(std::floor(p.pose.yaw / params.kld_bin_yaw)));
  }
  return static_cast<int>(bins.size());
}

// Wilson-Hilferty form of the KLD-sampling bound on the particle count.
inline int kld_target_count(int bins, const AmclParams& params) {
  if (bins <= 1) return params.min_particles;
  double k = static_cast<double>(bins);
  double z = normal_quantile(params.kld_delta);
  double a = 2.0 / (9.0 * (k - 1.0));
  double n = (k - 1.0) / (2.0 * params.kld_epsilon) * std::pow(1.0 - a + std::sqrt(a) * z, 3.0);
  n = std::clamp(n, static_cast<double>(params.min_particles),
                 static_cast<double>(params.max_particles));
  return static_cast<int>(std::ceil(n));
}

}  // namespace detail

// Systematic (low-variance) resampling, gated on effective sample size and
// sized by the KLD criterion. No-op while ESS stays above half the cloud.
inline void resample(ParticleSet& set, const AmclParams& params, Rng& rng) {
  size_t n = set.particles.size();
  if (n == 0) throw ContractError("resample: empty particle set");
  if (effective_sample_size(set) >= 0.5 * static_cast<double>(n)) return;

  int target = detail::kld_target_count(detail::kld_bin_count(set, params), params);
  std::vector<Particle> out;
  out.reserve(target);
  double step = 1.0 / target;
  double u = rng.uniform() * step;
  double cum = set.particles[0].weight;
  size_t i = 0;
  for (int m = 0; m < target; ++m) {
    double pos = u + m * step;
    while (pos > cum && i + 1 < n) {
      ++i;
      cum += set.particles[i].weight;
    }
    Particle p = set.particles[i];
    p.weight = step;
    out.push_back(p);
  }
  set.particles = std::move(out);
}

inline BeliefSummary summarize(const ParticleSet& set) {
  if (set.particles.empty()) throw ContractError("summarize: empty particle set");
  double mx = 0.0, my = 0.0, sin_sum = 0.0, cos_sum = 0.0;
  for (const Particle& p : set.particles) {
    mx += p.weight * p.pose.x;
    my += p.weight * p.pose.y;
    sin_sum += p.weight * std::sin(p.pose.yaw);
    cos_sum += p.weight * std::cos(p.pose.yaw);
  }
  double myaw = std::atan2(sin_sum, cos_sum);
  BeliefSummary s;
  s.mean = make_pose(mx, my, myaw);
  for (const Particle& p : set.particles) {
    double dx = p.pose.x - mx;
    double dy = p.pose.y - my;
    double dyaw = wrap_angle(p.pose.yaw - myaw);
    s.var_x += p.weight * dx * dx;
    s.var_y += p.weight * dy * dy;
    s.var_yaw += p.weight * dyaw * dyaw;
  }
  return s;
}

// The one entry point the environment uses each control period.
inline BeliefSummary localize_step(ParticleSet& set, const Pose2D& odom_delta,
                                   const ScanObservation& scan, const OccupancyGrid& grid,
                                   const AmclParams& params, Rng& rng) {
  motion_update(set, odom_delta, params, rng);
  measurement_update(set, scan, grid, params);
  resample(set, params, rng);
  return summarize(set);
}

}  // namespace locnav
