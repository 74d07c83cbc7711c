#pragma once

#include "semex/action.hpp"
#include "semex/agent.hpp"
#include "semex/curriculum.hpp"
#include "semex/episode.hpp"
#include "semex/errors.hpp"
#include "semex/metrics.hpp"
#include "semex/nn.hpp"
#include "semex/oracle.hpp"
#include "semex/reward.hpp"
#include "semex/rng.hpp"
#include "semex/scene.hpp"
#include "semex/scene_io.hpp"
