#pragma once

// Single include for the whole library.

#include "ilab/cache.hpp"
#include "ilab/dataset.hpp"
#include "ilab/ensemble.hpp"
#include "ilab/errors.hpp"
#include "ilab/eval.hpp"
#include "ilab/experiment.hpp"
#include "ilab/hessian.hpp"
#include "ilab/idx.hpp"
#include "ilab/influence.hpp"
#include "ilab/io.hpp"
#include "ilab/mlp.hpp"
#include "ilab/parallel.hpp"
#include "ilab/reports.hpp"
#include "ilab/rng.hpp"
#include "ilab/run_store.hpp"
#include "ilab/stats.hpp"
#include "ilab/synthetic.hpp"
#include "ilab/trainer.hpp"
