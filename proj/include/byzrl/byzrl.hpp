#pragma once

#include "byzrl/numeric.hpp"
#include "byzrl/aggregation.hpp"
#include "byzrl/attacks.hpp"
#include "byzrl/tasks.hpp"
#include "byzrl/inference.hpp"
#include "byzrl/distributed.hpp"
#include "byzrl/network.hpp"
#include "byzrl/decentralized.hpp"
#include "byzrl/experiment.hpp"
#include "byzrl/verify.hpp"
