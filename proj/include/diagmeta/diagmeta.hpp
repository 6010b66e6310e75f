#pragma once

// Umbrella header.

#include "core_data.hpp"
#include "inference.hpp"
#include "likelihoods.hpp"
#include "linalg.hpp"
#include "links.hpp"
#include "optimize.hpp"
#include "quadrature.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "svg.hpp"
