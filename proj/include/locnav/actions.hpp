#pragma once

#include <array>

#include "locnav/common.hpp"

namespace locnav {

// Discrete command menu: 4 translational x 7 angular velocities, indexed
// i_v * 7 + i_w with both axes ascending.
struct Action {
  double v = 0.0;  // m/s
  double w = 0.0;  // rad/s
};

inline constexpr int kNumActions = 28;

inline const std::array<Action, kNumActions>& action_catalog() {
  static const std::array<Action, kNumActions> catalog = [] {
    const double vs[4] = {0.0, 0.2, 0.4, 0.6};
    const double ws[7] = {-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9};
    std::array<Action, kNumActions> c{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 7; ++j) c[static_cast<size_t>(i * 7 + j)] = {vs[i], ws[j]};
    return c;
  }();
  return catalog;
}

inline const Action& action_at(int index) {
  if (index < 0 || index >= kNumActions)
    throw ContractError("action index " + std::to_string(index) + " outside [0, " +
                        std::to_string(kNumActions) + ")");
  return action_catalog()[static_cast<size_t>(index)];
}

}  // namespace locnav
