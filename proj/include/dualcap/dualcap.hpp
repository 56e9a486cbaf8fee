#pragma once

#include "dualcap/baselines.hpp"
#include "dualcap/capacity.hpp"
#include "dualcap/channels.hpp"
#include "dualcap/divergence.hpp"
#include "dualcap/errors.hpp"
#include "dualcap/ndt.hpp"
#include "dualcap/nn.hpp"
#include "dualcap/rng.hpp"
#include "dualcap/runtime.hpp"
