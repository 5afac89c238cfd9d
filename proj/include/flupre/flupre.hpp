#pragma once

// Umbrella header for the whole library.

#include "flupre/config.hpp"
#include "flupre/corpus.hpp"
#include "flupre/corpus_io.hpp"
#include "flupre/errors.hpp"
#include "flupre/experiment.hpp"
#include "flupre/featurize.hpp"
#include "flupre/model.hpp"
#include "flupre/nn/adam.hpp"
#include "flupre/nn/checkpoint.hpp"
#include "flupre/nn/gradcheck.hpp"
#include "flupre/nn/lstm.hpp"
#include "flupre/nn/ops.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/nn/transformer.hpp"
#include "flupre/pcc.hpp"
#include "flupre/pretrain.hpp"
#include "flupre/rng.hpp"
#include "flupre/scorer.hpp"
#include "flupre/synth.hpp"
#include "flupre/tensor.hpp"
