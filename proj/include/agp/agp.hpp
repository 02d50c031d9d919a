#pragma once

// Asynchronous gradient-push over directed graphs: push-sum consensus with
// bounded computation and communication delays, the gradient-push optimizer
// in both matrix and per-agent buffer form, a threaded execution backend, and
// post-hoc bias/rate analysis.

#include "agp/analysis.hpp"
#include "agp/common.hpp"
#include "agp/experiment.hpp"
#include "agp/io.hpp"
#include "agp/objectives.hpp"
#include "agp/optimizer.hpp"
#include "agp/pushsum.hpp"
#include "agp/runtime.hpp"
#include "agp/schedule.hpp"
#include "agp/topology.hpp"
