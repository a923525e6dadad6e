#pragma once

// Umbrella header.

#include "sch/config.hpp"
#include "sch/experiments.hpp"
#include "sch/integrator.hpp"
#include "sch/invariants.hpp"
#include "sch/model.hpp"
#include "sch/noise.hpp"
#include "sch/nonlinearity.hpp"
#include "sch/numerics.hpp"
#include "sch/rng.hpp"
#include "sch/runner.hpp"
#include "sch/spectral.hpp"
#include "sch/version.hpp"
