#pragma once

#include "biomstat/embedding_store.hpp"
#include "biomstat/error.hpp"
#include "biomstat/eval_harness.hpp"
#include "biomstat/features.hpp"
#include "biomstat/gbtree.hpp"
#include "biomstat/parallel.hpp"
#include "biomstat/random.hpp"
#include "biomstat/similarity_stats.hpp"
#include "biomstat/synth.hpp"
