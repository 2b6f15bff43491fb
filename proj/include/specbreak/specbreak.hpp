#pragma once

// Umbrella header: structural break analysis for the spectrum and trace of
// covariance operators of functional time series.

#include "specbreak/basis.hpp"
#include "specbreak/breaktest.hpp"
#include "specbreak/errors.hpp"
#include "specbreak/longrun.hpp"
#include "specbreak/quantile_cache.hpp"
#include "specbreak/simlab.hpp"
#include "specbreak/spectrum.hpp"
