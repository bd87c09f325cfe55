#pragma once

#include "bloom/common.hpp"
#include "bloom/grid.hpp"
#include "bloom/kernel.hpp"
#include "bloom/pv.hpp"
#include "bloom/operators.hpp"
#include "bloom/dyadic.hpp"
#include "bloom/weights.hpp"
#include "bloom/oscillation.hpp"
#include "bloom/sparse_ops.hpp"
#include "bloom/lowerbound.hpp"
#include "bloom/experiments.hpp"
