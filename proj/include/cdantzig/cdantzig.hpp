#pragma once

#include "baselines.hpp"
#include "builtins.hpp"
#include "dantzig.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "exact_sum.hpp"
#include "gram.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "lp.hpp"
#include "normal.hpp"
#include "parallel.hpp"
#include "regularized.hpp"
#include "rng.hpp"
#include "sem.hpp"
#include "study.hpp"
