#pragma once

#include "celm/analysis.hpp"
#include "celm/config.hpp"
#include "celm/data.hpp"
#include "celm/error.hpp"
#include "celm/estimator.hpp"
#include "celm/federation.hpp"
#include "celm/io.hpp"
#include "celm/log.hpp"
#include "celm/nn.hpp"
#include "celm/parallel.hpp"
#include "celm/probe.hpp"
#include "celm/reports.hpp"
#include "celm/rng.hpp"
#include "celm/runner.hpp"
#include "celm/tensor.hpp"
