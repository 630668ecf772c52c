#pragma once

#include "activations.hpp"
#include "analysis.hpp"
#include "behavior.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "framework.hpp"
#include "optimizer.hpp"
#include "parallel.hpp"
#include "probe.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "stability.hpp"
#include "stats.hpp"
#include "synth.hpp"
