#pragma once

#include "gridward/core.hpp"
#include "gridward/grid_model.hpp"
#include "gridward/power_flow.hpp"
#include "gridward/chronics.hpp"
#include "gridward/opponent.hpp"
#include "gridward/action.hpp"
#include "gridward/environment.hpp"
#include "gridward/episode_log.hpp"
#include "gridward/scoring.hpp"
#include "gridward/agents.hpp"
#include "gridward/runner.hpp"
