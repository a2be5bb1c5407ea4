#pragma once

// Umbrella header for the post-detection toolkit.

#include "firepost/baselines.hpp"
#include "firepost/config.hpp"
#include "firepost/crn.hpp"
#include "firepost/eval.hpp"
#include "firepost/geometry.hpp"
#include "firepost/image.hpp"
#include "firepost/imfeat.hpp"
#include "firepost/ingest.hpp"
#include "firepost/pipeline.hpp"
#include "firepost/rng.hpp"
#include "firepost/synthbench.hpp"
#include "firepost/uncertainty.hpp"

