#pragma once

// Umbrella header for the whole library.

#include "provenance/common.hpp"
#include "provenance/config.hpp"
#include "provenance/corpus.hpp"
#include "provenance/detector.hpp"
#include "provenance/eval.hpp"
#include "provenance/features.hpp"
#include "provenance/filtering.hpp"
#include "provenance/graphs.hpp"
#include "provenance/image_io.hpp"
#include "provenance/imaging.hpp"
#include "provenance/index.hpp"
#include "provenance/ingest.hpp"
#include "provenance/kmeans.hpp"
#include "provenance/matching.hpp"
#include "provenance/pairwise.hpp"
#include "provenance/pipeline.hpp"
#include "provenance/synth.hpp"
