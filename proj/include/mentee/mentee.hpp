#pragma once
// Umbrella header.

#include "mentee/checkpoint.hpp"
#include "mentee/config.hpp"
#include "mentee/data.hpp"
#include "mentee/errors.hpp"
#include "mentee/gradcheck.hpp"
#include "mentee/harness.hpp"
#include "mentee/layers.hpp"
#include "mentee/losses.hpp"
#include "mentee/metrics.hpp"
#include "mentee/network.hpp"
#include "mentee/optim.hpp"
#include "mentee/pgm.hpp"
#include "mentee/probe.hpp"
#include "mentee/rng.hpp"
#include "mentee/schedule.hpp"
#include "mentee/synth.hpp"
#include "mentee/tensor.hpp"
#include "mentee/validate.hpp"
