#pragma once

#include "cpcp/types.hpp"
#include "cpcp/mask.hpp"
#include "cpcp/random.hpp"
#include "cpcp/svd.hpp"
#include "cpcp/iterates.hpp"
#include "cpcp/problem.hpp"
#include "cpcp/trace.hpp"
#include "cpcp/result.hpp"
#include "cpcp/oracles.hpp"
#include "cpcp/fw.hpp"
#include "cpcp/fwt.hpp"
#include "cpcp/baselines.hpp"
#include "cpcp/synthetic.hpp"
#include "cpcp/bench.hpp"
#include "cpcp/io.hpp"
