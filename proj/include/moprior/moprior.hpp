#pragma once

// Umbrella header for the moprior library: k-space motion simulation,
// prior assembly, correction networks, training and SSIM evaluation.

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"
#include "moprior/core/rng.hpp"

#include "moprior/io/manifest.hpp"
#include "moprior/io/phantom.hpp"
#include "moprior/io/volume.hpp"
#include "moprior/io/volume_io.hpp"

#include "moprior/sim/fft.hpp"
#include "moprior/sim/motion.hpp"
#include "moprior/sim/rotate.hpp"

#include "moprior/prior/prior.hpp"

#include "moprior/nn/model.hpp"
#include "moprior/nn/ops.hpp"
#include "moprior/nn/tensor.hpp"

#include "moprior/train/adam.hpp"
#include "moprior/train/loss.hpp"
#include "moprior/train/trainer.hpp"

#include "moprior/metrics/report.hpp"
#include "moprior/metrics/ssim.hpp"

#include "moprior/cli/commands.hpp"
#include "moprior/cli/config.hpp"
#include "moprior/cli/pngplot.hpp"
