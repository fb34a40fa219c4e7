#pragma once

#include "tailcheck/error.hpp"
#include "tailcheck/rng.hpp"
#include "tailcheck/parallel.hpp"
#include "tailcheck/quadrature.hpp"
#include "tailcheck/evt_core.hpp"
#include "tailcheck/lr_test.hpp"
#include "tailcheck/diagnostics.hpp"
#include "tailcheck/mc_harness.hpp"
#include "tailcheck/io.hpp"
