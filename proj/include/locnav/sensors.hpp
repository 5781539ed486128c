#pragma once

#include <cmath>
#include <string>

#include "locnav/common.hpp"
#include "locnav/geometry.hpp"
#include "locnav/rng.hpp"
#include "locnav/scan.hpp"

namespace locnav {

// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Beam range-finder mixture: Gaussian hit noise, max-range failures, uniform
// random returns. Unexpected-object errors come from simulated pedestrians,
// so z_short stays 0 and the component is not modeled.
struct BeamModelParams {
  double z_hit = 0.98;
  double z_short = 0.0;
  double z_max = 0.01;
  double z_rand = 0.01;
  double sigma_hit = 0.02;   // m
  double max_range = 12.0;   // m
  double max_range_bin = 0.01;  // width assigned to the max-range point mass

  void validate() const {
    double sum = z_hit + z_short + z_max + z_rand;
    if (std::abs(sum - 1.0) > 1e-9)
      throw ValidationError("beam model: mixture weights sum to " + std::to_string(sum) +
                            ", expected 1");
    if (z_short != 0.0)
      throw ValidationError("beam model: z_short is not modeled and must be 0");
    if (!(sigma_hit > 0.0)) throw ValidationError("beam model: sigma_hit must be > 0");
    if (!(max_range > 0.0)) throw ValidationError("beam model: max_range must be > 0");
    if (!(max_range_bin > 0.0)) throw ValidationError("beam model: max_range_bin must be > 0");
    if (z_hit < 0.0 || z_max < 0.0 || z_rand < 0.0)
      throw ValidationError("beam model: mixture weights must be non-negative");
  }
};

enum class BeamCategory { kHit, kShort, kMax, kRand };

struct BeamSample {
  double range = 0.0;
  BeamCategory category = BeamCategory::kHit;
};

inline BeamSample sample_beam(double true_range, const BeamModelParams& p, Rng& rng) {
  double u = rng.uniform();
  if (u < p.z_hit) {
    double r = true_range + p.sigma_hit * rng.normal();
    return {std::clamp(r, 0.0, p.max_range), BeamCategory::kHit};
  }
  u -= p.z_hit;
  if (u < p.z_short) {
    // Unreachable while validate() forces z_short = 0; kept for the enum's sake.
    return {rng.uniform(0.0, true_range), BeamCategory::kShort};
  }
  u -= p.z_short;
  if (u < p.z_max) return {p.max_range, BeamCategory::kMax};
  return {rng.uniform(0.0, p.max_range), BeamCategory::kRand};
}

inline ScanObservation apply_beam_noise(const ScanObservation& truth, const BeamModelParams& p,
                                        Rng& rng) {
  p.validate();
  ScanObservation out;
  out.ranges.resize(truth.ranges.size());
  for (size_t i = 0; i < truth.ranges.size(); ++i)
    out.ranges[i] = sample_beam(truth.ranges[i], p, rng).range;
  return out;
}

// Measurement density of one observed range given the expected range. The
// Gaussian hit component is truncated-renormalized on [0, max_range]; the
// max-range failure mass is spread over a max_range_bin-wide bin at the top.
inline double beam_density(double observed, double expected, const BeamModelParams& p) {
  double density = 0.0;
  if (observed >= 0.0 && observed <= p.max_range) {
    double eta = normal_cdf((p.max_range - expected) / p.sigma_hit) -
                 normal_cdf((0.0 - expected) / p.sigma_hit);
    if (eta > 1e-12) {
      double z = (observed - expected) / p.sigma_hit;
      double gauss = std::exp(-0.5 * z * z) / (p.sigma_hit * std::sqrt(2.0 * kPi));
      density += p.z_hit * gauss / eta;
    }
    density += p.z_rand / p.max_range;
  }
  if (observed >= p.max_range - 1e-9) density += p.z_max / p.max_range_bin;
  return density;
}

inline double beam_log_likelihood(const ScanObservation& observed,
                                  const ScanObservation& expected, const BeamModelParams& p,
                                  int stride = 1) {
  if (observed.ranges.size() != expected.ranges.size())
    throw ContractError("beam_log_likelihood: scans have " +
                        std::to_string(observed.ranges.size()) + " vs " +
                        std::to_string(expected.ranges.size()) + " beams");
  if (stride < 1) throw ContractError("beam_log_likelihood: stride must be >= 1");
  double ll = 0.0;
  for (size_t i = 0; i < observed.ranges.size(); i += stride) {
    double d = beam_density(observed.ranges[i], expected.ranges[i], p);
    // Floor keeps a single wild beam from sending the log-likelihood to -inf.
    ll += std::log(std::max(d, 1e-300));
  }
  return ll;
}

struct OdomNoiseParams {
  double gain_mean = 1.0;
  double gain_std = 0.1;  // N(1, 0.01) with 0.01 read as variance

  void validate() const {
    if (gain_std < 0.0) throw ValidationError("odom noise: gain_std must be >= 0");
  }
};

struct Velocity {
  double v = 0.0;  // m/s
  double w = 0.0;  // rad/s
};

// Execution noise: each commanded component is scaled by an independent
// multiplicative gain. Zero commands stay exactly zero.
inline Velocity apply_odom_noise(Velocity commanded, const OdomNoiseParams& p, Rng& rng) {
  double g1 = rng.normal(p.gain_mean, p.gain_std);
  double g2 = rng.normal(p.gain_mean, p.gain_std);
  return {commanded.v * g1, commanded.w * g2};
}

// Exact constant-twist arc; falls back to the straight-line limit for tiny
// angular rates.
inline Pose2D integrate_unicycle(const Pose2D& pose, double v, double w, double dt) {
  if (!(dt > 0.0)) throw ContractError("integrate_unicycle: dt must be > 0");
  if (std::abs(w) < 1e-6) {
    return make_pose(pose.x + v * dt * std::cos(pose.yaw), pose.y + v * dt * std::sin(pose.yaw),
                     pose.yaw + w * dt);
  }
  double yaw1 = pose.yaw + w * dt;
  double r = v / w;
  return make_pose(pose.x + r * (std::sin(yaw1) - std::sin(pose.yaw)),
                   pose.y - r * (std::cos(yaw1) - std::cos(pose.yaw)), yaw1);
}

}  // namespace locnav
