#pragma once

#include <csicl/augment/augment.hpp>
#include <csicl/cheatsheet/cheatsheet.hpp>
#include <csicl/datasets/dataset.hpp>
#include <csicl/datasets/prng.hpp>
#include <csicl/datasets/registry.hpp>
#include <csicl/demonstration.hpp>
#include <csicl/error.hpp>
#include <csicl/harness/config.hpp>
#include <csicl/harness/report.hpp>
#include <csicl/harness/run.hpp>
#include <csicl/icl/answer.hpp>
#include <csicl/icl/inference.hpp>
#include <csicl/llm/cache.hpp>
#include <csicl/llm/client.hpp>
#include <csicl/llm/tokens.hpp>
#include <csicl/llm/transport.hpp>
#include <csicl/llm/types.hpp>
#include <csicl/retrieval/retrieval.hpp>
