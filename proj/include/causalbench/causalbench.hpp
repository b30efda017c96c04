#pragma once

// Umbrella header. The HTTP-facing pieces (llm_http.hpp,
// knowledge_pubtator.hpp) are excluded because they pull in the bundled
// HTTP library; include them directly where needed.

#include "causalbench/core.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/evaluation.hpp"
#include "causalbench/groundtruth.hpp"
#include "causalbench/ingest.hpp"
#include "causalbench/knowledge.hpp"
#include "causalbench/llm_gateway.hpp"
#include "causalbench/manifest.hpp"
#include "causalbench/matrix_io.hpp"
#include "causalbench/prompt.hpp"
#include "causalbench/stats.hpp"
#include "causalbench/synth.hpp"
