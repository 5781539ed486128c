#pragma once

// Convenience include for the whole library: simulation, localization,
// learning, baselines, evaluation, and rendering.

#include "locnav/actions.hpp"
#include "locnav/agent.hpp"
#include "locnav/autodiff.hpp"
#include "locnav/baselines.hpp"
#include "locnav/checkpoint.hpp"
#include "locnav/common.hpp"
#include "locnav/config.hpp"
#include "locnav/crowd.hpp"
#include "locnav/env.hpp"
#include "locnav/eval.hpp"
#include "locnav/geometry.hpp"
#include "locnav/localization.hpp"
#include "locnav/network.hpp"
#include "locnav/observation.hpp"
#include "locnav/parallel.hpp"
#include "locnav/render.hpp"
#include "locnav/reward.hpp"
#include "locnav/rng.hpp"
#include "locnav/scan.hpp"
#include "locnav/sensors.hpp"
#include "locnav/tensor.hpp"
#include "locnav/world.hpp"
