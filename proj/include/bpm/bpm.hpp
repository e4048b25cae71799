#pragma once

#include "bpm/core.hpp"
#include "bpm/environments.hpp"
#include "bpm/harness.hpp"
#include "bpm/numeric.hpp"
#include "bpm/policy_baseline.hpp"
#include "bpm/policy_concave.hpp"
#include "bpm/policy_monotonic.hpp"
#include "bpm/rng.hpp"
#include "bpm/variants.hpp"
