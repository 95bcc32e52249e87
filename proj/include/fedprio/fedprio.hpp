// Umbrella header.
#pragma once

#include "fedprio/config.hpp"
#include "fedprio/criteria.hpp"
#include "fedprio/data.hpp"
#include "fedprio/error.hpp"
#include "fedprio/federation.hpp"
#include "fedprio/learner.hpp"
#include "fedprio/metrics.hpp"
#include "fedprio/report.hpp"
#include "fedprio/rng.hpp"
#include "fedprio/runner.hpp"
#include "fedprio/scoring.hpp"
