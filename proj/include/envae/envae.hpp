#pragma once

#include "envae/autodiff.hpp"
#include "envae/checkpoint.hpp"
#include "envae/config_json.hpp"
#include "envae/data.hpp"
#include "envae/diagnostics.hpp"
#include "envae/errors.hpp"
#include "envae/losses.hpp"
#include "envae/nets.hpp"
#include "envae/parallel.hpp"
#include "envae/random.hpp"
#include "envae/tensor.hpp"
#include "envae/train.hpp"
