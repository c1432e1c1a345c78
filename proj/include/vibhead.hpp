#pragma once

#include "vibhead/archive.hpp"
#include "vibhead/auth.hpp"
#include "vibhead/config.hpp"
#include "vibhead/error.hpp"
#include "vibhead/eval.hpp"
#include "vibhead/features.hpp"
#include "vibhead/layers.hpp"
#include "vibhead/matrix.hpp"
#include "vibhead/mfcc.hpp"
#include "vibhead/model.hpp"
#include "vibhead/persistence.hpp"
#include "vibhead/platform.hpp"
#include "vibhead/rng.hpp"
#include "vibhead/signal.hpp"
#include "vibhead/synth.hpp"
#include "vibhead/tensor.hpp"
#include "vibhead/training.hpp"
