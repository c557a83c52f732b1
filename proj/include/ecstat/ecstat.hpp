#pragma once

#include "coherence.hpp"
#include "ec_analysis.hpp"
#include "effectiveness.hpp"
#include "gram_losses.hpp"
#include "loess.hpp"
#include "pipeline.hpp"
#include "symmetry.hpp"
#include "tensor_store.hpp"
