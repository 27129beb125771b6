// Umbrella header.
#pragma once

#include "snstf/ratecore.hpp"
#include "snstf/random.hpp"
#include "snstf/optics.hpp"
#include "snstf/servo.hpp"
#include "snstf/counts.hpp"
#include "snstf/engine.hpp"
#include "snstf/postproc.hpp"
#include "snstf/bench/config.hpp"
#include "snstf/bench/presets.hpp"
#include "snstf/bench/pipeline.hpp"
#include "snstf/bench/sweep.hpp"
#include "snstf/bench/optimize.hpp"
#include "snstf/bench/verify.hpp"
