#pragma once

#include "mlsis/dynamics.hpp"
#include "mlsis/equilibria.hpp"
#include "mlsis/experiment.hpp"
#include "mlsis/linalg.hpp"
#include "mlsis/network.hpp"
#include "mlsis/scenario.hpp"
#include "mlsis/spectral.hpp"
#include "mlsis/stochastic.hpp"
#include "mlsis/types.hpp"
