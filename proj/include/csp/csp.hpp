#pragma once

#include "csp/cluster_index.hpp"
#include "csp/embeddings.hpp"
#include "csp/error.hpp"
#include "csp/features.hpp"
#include "csp/index_io.hpp"
#include "csp/ingestion.hpp"
#include "csp/kmeans.hpp"
#include "csp/shift_engine.hpp"
#include "csp/sketch.hpp"
