#pragma once

// Umbrella header for the mlchains toolkit: multi-label classification of
// bioacoustic recordings with ensembles of classifier chains over random
// forests, a histogram-of-segments codebook reduction, and a repeated
// cross-validation harness.

#include "mlchains/chains.hpp"
#include "mlchains/codebook.hpp"
#include "mlchains/csv.hpp"
#include "mlchains/dataset.hpp"
#include "mlchains/experiment.hpp"
#include "mlchains/forest.hpp"
#include "mlchains/matrix.hpp"
#include "mlchains/metrics.hpp"
#include "mlchains/parallel.hpp"
#include "mlchains/rng.hpp"
#include "mlchains/segmentation.hpp"
#include "mlchains/spectrogram.hpp"
#include "mlchains/synthetic.hpp"
#include "mlchains/wav.hpp"
