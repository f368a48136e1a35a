#pragma once

#include "fgcn/checkpoint.hpp"
#include "fgcn/config.hpp"
#include "fgcn/error.hpp"
#include "fgcn/fusion.hpp"
#include "fgcn/graph.hpp"
#include "fgcn/model.hpp"
#include "fgcn/ops.hpp"
#include "fgcn/optim.hpp"
#include "fgcn/predict.hpp"
#include "fgcn/sampling.hpp"
#include "fgcn/skeleton.hpp"
#include "fgcn/synth.hpp"
#include "fgcn/tensor.hpp"
#include "fgcn/training.hpp"
#include "fgcn/verify.hpp"
