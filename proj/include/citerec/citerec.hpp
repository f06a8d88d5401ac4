#pragma once

#include "citerec/cca.hpp"
#include "citerec/common.hpp"
#include "citerec/config.hpp"
#include "citerec/corpus.hpp"
#include "citerec/dcca.hpp"
#include "citerec/embedding_table.hpp"
#include "citerec/evaluation.hpp"
#include "citerec/fusion.hpp"
#include "citerec/graph_embed.hpp"
#include "citerec/inference.hpp"
#include "citerec/pipeline.hpp"
#include "citerec/retrieval.hpp"
#include "citerec/synthetic.hpp"
#include "citerec/text_embed.hpp"
