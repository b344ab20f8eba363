#pragma once
// Umbrella header.

#include "vortex/boundary.hpp"
#include "vortex/config.hpp"
#include "vortex/core.hpp"
#include "vortex/dual.hpp"
#include "vortex/dynamics.hpp"
#include "vortex/io.hpp"
#include "vortex/measure.hpp"
#include "vortex/ot.hpp"
#include "vortex/reconstruction.hpp"
#include "vortex/version.hpp"
