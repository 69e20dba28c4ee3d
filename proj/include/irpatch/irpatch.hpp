#pragma once

// Umbrella header for the infrared-patch optimization library.

#include "errors.hpp"
#include "rng.hpp"
#include "grid.hpp"
#include "kernels.hpp"
#include "image.hpp"
#include "pnm.hpp"
#include "textio.hpp"
#include "aggreg.hpp"
#include "binreg.hpp"
#include "victim.hpp"
#include "scene.hpp"
#include "optim.hpp"
#include "patchkit.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "harness.hpp"
