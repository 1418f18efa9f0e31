#pragma once

#include "tralfm/common.hpp"
#include "tralfm/corpus.hpp"
#include "tralfm/corpus_io.hpp"
#include "tralfm/eval.hpp"
#include "tralfm/evaluate.hpp"
#include "tralfm/model.hpp"
#include "tralfm/model_io.hpp"
#include "tralfm/rng.hpp"
#include "tralfm/sampler.hpp"
#include "tralfm/simulate.hpp"
