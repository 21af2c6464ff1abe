// Umbrella header: pulls in the whole library.

#pragma once

#include "kinn/attention.hpp"
#include "kinn/backends.hpp"
#include "kinn/common.hpp"
#include "kinn/config.hpp"
#include "kinn/dataset.hpp"
#include "kinn/encoding.hpp"
#include "kinn/explain.hpp"
#include "kinn/http_backends.hpp"
#include "kinn/lexicon.hpp"
#include "kinn/metrics.hpp"
#include "kinn/network.hpp"
#include "kinn/pipeline.hpp"
#include "kinn/pos.hpp"
#include "kinn/tagging.hpp"
#include "kinn/train.hpp"
