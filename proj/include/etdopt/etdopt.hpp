#pragma once

// Umbrella header.

#include "etdopt/common.hpp"
#include "etdopt/ct_engine.hpp"
#include "etdopt/dt_engine.hpp"
#include "etdopt/graph.hpp"
#include "etdopt/objective.hpp"
#include "etdopt/passivity.hpp"
#include "etdopt/runner.hpp"
#include "etdopt/scenario.hpp"
#include "etdopt/trace.hpp"
#include "etdopt/trigger.hpp"
