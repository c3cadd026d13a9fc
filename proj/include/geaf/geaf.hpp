#pragma once

#include "geaf/dataset.hpp"
#include "geaf/error.hpp"
#include "geaf/evolution.hpp"
#include "geaf/expr.hpp"
#include "geaf/grammar.hpp"
#include "geaf/matrix.hpp"
#include "geaf/metrics.hpp"
#include "geaf/network.hpp"
#include "geaf/run.hpp"
