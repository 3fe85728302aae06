#pragma once

#include "flowinv/analytic.hpp"
#include "flowinv/checkpoint.hpp"
#include "flowinv/dataset.hpp"
#include "flowinv/field.hpp"
#include "flowinv/io.hpp"
#include "flowinv/metrics.hpp"
#include "flowinv/nn.hpp"
#include "flowinv/parallel.hpp"
#include "flowinv/rng.hpp"
#include "flowinv/sampler.hpp"
#include "flowinv/stats.hpp"
#include "flowinv/step_rule.hpp"
#include "flowinv/tensor.hpp"
#include "flowinv/time_grid.hpp"
#include "flowinv/uni_edit.hpp"
#include "flowinv/uni_inv.hpp"
