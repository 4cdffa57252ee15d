#pragma once

// Umbrella header for the whole library.

#include "tag/analysis.hpp"
#include "tag/config.hpp"
#include "tag/errors.hpp"
#include "tag/geometry.hpp"
#include "tag/guidance.hpp"
#include "tag/rng.hpp"
#include "tag/runner.hpp"
#include "tag/sampler.hpp"
#include "tag/schedule.hpp"
#include "tag/scoremodel.hpp"
#include "tag/svg.hpp"
#include "tag/vec.hpp"
#include "tag/verify.hpp"
