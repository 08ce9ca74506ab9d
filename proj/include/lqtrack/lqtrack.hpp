#pragma once

#include "lqtrack/estimator.hpp"
#include "lqtrack/lqr.hpp"
#include "lqtrack/model.hpp"
#include "lqtrack/pipeline.hpp"
#include "lqtrack/regressor.hpp"
#include "lqtrack/scenario_json.hpp"
#include "lqtrack/sim.hpp"
