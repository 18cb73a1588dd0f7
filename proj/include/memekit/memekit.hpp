#pragma once

#include "memekit/analysis.hpp"
#include "memekit/corpus.hpp"
#include "memekit/embedding.hpp"
#include "memekit/error.hpp"
#include "memekit/evaluation.hpp"
#include "memekit/fusion.hpp"
#include "memekit/kmeans.hpp"
#include "memekit/labels.hpp"
#include "memekit/metric_index.hpp"
#include "memekit/rng.hpp"
#include "memekit/thresholds.hpp"
#include "memekit/tlc.hpp"
#include "memekit/tsplit.hpp"
