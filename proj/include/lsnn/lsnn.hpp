#pragma once

#include "lsnn/commands.hpp"
#include "lsnn/cpwl_theory.hpp"
#include "lsnn/errors.hpp"
#include "lsnn/hyperplanes.hpp"
#include "lsnn/ls_functional.hpp"
#include "lsnn/metrics.hpp"
#include "lsnn/nn_core.hpp"
#include "lsnn/optimizer.hpp"
#include "lsnn/parallel.hpp"
#include "lsnn/persistence.hpp"
#include "lsnn/problem_bank.hpp"
#include "lsnn/tile_kernels.hpp"
