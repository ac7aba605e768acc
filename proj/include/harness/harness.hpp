#pragma once

#include "harness/bounds.hpp"
#include "harness/cli.hpp"
#include "harness/config.hpp"
#include "harness/error.hpp"
#include "harness/exact_sum.hpp"
#include "harness/kernel.hpp"
#include "harness/noise.hpp"
#include "harness/oracle.hpp"
#include "harness/process.hpp"
#include "harness/random.hpp"
#include "harness/stats.hpp"
