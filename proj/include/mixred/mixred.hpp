#pragma once

// Bayesian mixture predictors over parametric non-i.i.d. sources, exact and
// Monte Carlo redundancy D(P^n || M^n), redundancy bounds, and an arithmetic
// coder realizing the compression interpretation.

#include "mixred/bounds.hpp"
#include "mixred/coder.hpp"
#include "mixred/common.hpp"
#include "mixred/config.hpp"
#include "mixred/families.hpp"
#include "mixred/fisher.hpp"
#include "mixred/linalg.hpp"
#include "mixred/mixtures.hpp"
#include "mixred/priors.hpp"
#include "mixred/redundancy.hpp"
#include "mixred/rng.hpp"
