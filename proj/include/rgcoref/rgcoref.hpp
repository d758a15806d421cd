#pragma once

#include "rgcoref/checkpoint.hpp"
#include "rgcoref/coref_class.hpp"
#include "rgcoref/corpus.hpp"
#include "rgcoref/gradcheck_suite.hpp"
#include "rgcoref/graph.hpp"
#include "rgcoref/model.hpp"
#include "rgcoref/nn.hpp"
#include "rgcoref/param_store.hpp"
#include "rgcoref/random.hpp"
#include "rgcoref/rgcn.hpp"
#include "rgcoref/run_config.hpp"
#include "rgcoref/synthetic.hpp"
#include "rgcoref/tensor.hpp"
#include "rgcoref/train.hpp"
