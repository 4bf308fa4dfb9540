#pragma once

#include "odb/core.hpp"
#include "odb/debias_batch.hpp"
#include "odb/debias_offline.hpp"
#include "odb/debias_ts.hpp"
#include "odb/decorrelator.hpp"
#include "odb/diagnostics.hpp"
#include "odb/estimate.hpp"
#include "odb/harness.hpp"
#include "odb/inference.hpp"
#include "odb/io.hpp"
#include "odb/lasso.hpp"
#include "odb/model.hpp"
#include "odb/normal.hpp"
#include "odb/simgen.hpp"
