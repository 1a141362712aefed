#pragma once
// Umbrella header.

#include "cms/hetero.hpp"
#include "cms/io.hpp"
#include "cms/parallel.hpp"
#include "cms/prng.hpp"
#include "cms/sketch.hpp"
#include "cms/streamgen.hpp"
#include "cms/tabulation.hpp"
