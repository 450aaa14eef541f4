#pragma once

// Umbrella header for the logistic branching process toolkit.

#include "lbp/continuous_process.hpp"
#include "lbp/discrete_process.hpp"
#include "lbp/io.hpp"
#include "lbp/mechanism.hpp"
#include "lbp/mechanism_kernel.hpp"
#include "lbp/process_types.hpp"
#include "lbp/riccati.hpp"
#include "lbp/svg.hpp"
#include "lbp/validate.hpp"
