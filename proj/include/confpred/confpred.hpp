#pragma once

//! Distribution-free conformal prediction regions from kernel density
//! conformity scores: plug-in sandwiching level sets, data-driven
//! bandwidth selection, and a seeded Monte-Carlo validation harness.

#include "confpred/bandwidth.hpp"
#include "confpred/conformal.hpp"
#include "confpred/csv.hpp"
#include "confpred/dataset.hpp"
#include "confpred/density.hpp"
#include "confpred/grid.hpp"
#include "confpred/harness.hpp"
#include "confpred/kernels.hpp"
#include "confpred/mixture.hpp"
#include "confpred/parallel.hpp"
#include "confpred/random.hpp"
