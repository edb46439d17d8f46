#pragma once

#include "rebal/analytic.hpp"
#include "rebal/config.hpp"
#include "rebal/core.hpp"
#include "rebal/datagen.hpp"
#include "rebal/dataset_io.hpp"
#include "rebal/harness.hpp"
#include "rebal/metaref.hpp"
#include "rebal/policy.hpp"
#include "rebal/rebalance.hpp"
#include "rebal/repro.hpp"
#include "rebal/stats.hpp"
#include "rebal/trainer.hpp"
