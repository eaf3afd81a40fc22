// umbrella header
#pragma once

#include "sntd/tensor.hpp"
#include "sntd/tensor_io.hpp"
#include "sntd/rng.hpp"
#include "sntd/model.hpp"
#include "sntd/prox.hpp"
#include "sntd/solver.hpp"
#include "sntd/masked.hpp"
#include "sntd/hopca.hpp"
#include "sntd/synth.hpp"
