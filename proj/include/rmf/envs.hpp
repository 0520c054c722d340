#pragma once

#include <memory>
#include <string>

#include "rmf/env.hpp"
#include "rmf/pendulum.hpp"
#include "rmf/point_robot.hpp"

namespace rmf {

// String ids: pendulum-full, pendulum-p, pendulum-v, semicircle, wind.
inline std::unique_ptr<Env> make_env(const std::string& id) {
  if (id == "pendulum-full") return std::make_unique<PendulumEnv>(OcclusionMode::full);
  if (id == "pendulum-p") return std::make_unique<PendulumEnv>(OcclusionMode::position_only);
  if (id == "pendulum-v") return std::make_unique<PendulumEnv>(OcclusionMode::velocity_only);
  if (id == "semicircle") return std::make_unique<SemiCircleEnv>();
  if (id == "wind") return std::make_unique<WindEnv>();
  throw config_error("unknown environment id '" + id +
                     "' (expected pendulum-full, pendulum-p, pendulum-v, semicircle, wind)");
}

}  // namespace rmf
