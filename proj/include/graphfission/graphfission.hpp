#pragma once

#include "graphfission/basis.hpp"
#include "graphfission/cross_validation.hpp"
#include "graphfission/graph.hpp"
#include "graphfission/inference.hpp"
#include "graphfission/io.hpp"
#include "graphfission/random.hpp"
#include "graphfission/simulation.hpp"
#include "graphfission/thinning.hpp"
#include "graphfission/trend_filter.hpp"
