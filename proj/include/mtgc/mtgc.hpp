// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtgc/analysis.hpp"
#include "mtgc/checkpoint.hpp"
#include "mtgc/config.hpp"
#include "mtgc/engine.hpp"
#include "mtgc/engine_types.hpp"
#include "mtgc/errors.hpp"
#include "mtgc/experiment.hpp"
#include "mtgc/multilevel.hpp"
#include "mtgc/objective.hpp"
#include "mtgc/parallel.hpp"
#include "mtgc/param_vector.hpp"
#include "mtgc/partition.hpp"
#include "mtgc/rng.hpp"
#include "mtgc/synthetic.hpp"
#include "mtgc/task.hpp"
#include "mtgc/topology.hpp"
#include "mtgc/trace.hpp"
