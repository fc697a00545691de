#pragma once

#include "topokd/checkpoint.hpp"
#include "topokd/config.hpp"
#include "topokd/dataset.hpp"
#include "topokd/experiment.hpp"
#include "topokd/flops.hpp"
#include "topokd/kd_losses.hpp"
#include "topokd/metrics.hpp"
#include "topokd/mixup.hpp"
#include "topokd/models.hpp"
#include "topokd/network.hpp"
#include "topokd/optimizer.hpp"
#include "topokd/persistence.hpp"
#include "topokd/persistence_image.hpp"
#include "topokd/pi_cache.hpp"
#include "topokd/synthetic.hpp"
#include "topokd/training.hpp"
