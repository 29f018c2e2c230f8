#pragma once

// Convenience header pulling in the whole library.

#include "duolift/admittance.hpp"
#include "duolift/allocation.hpp"
#include "duolift/attitude_control.hpp"
#include "duolift/dynamics.hpp"
#include "duolift/errors.hpp"
#include "duolift/harness/metrics.hpp"
#include "duolift/harness/run_log.hpp"
#include "duolift/harness/scenario.hpp"
#include "duolift/harness/simulation.hpp"
#include "duolift/harness/telemetry.hpp"
#include "duolift/position_control.hpp"
#include "duolift/types.hpp"
