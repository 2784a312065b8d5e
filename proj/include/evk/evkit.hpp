// Copyright 2026 evkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header: the whole event-processing toolkit in one include.

#pragma once

#include "evk/bench.hpp"
#include "evk/core.hpp"
#include "evk/filtering.hpp"
#include "evk/flow.hpp"
#include "evk/hots.hpp"
#include "evk/image_io.hpp"
#include "evk/ingest.hpp"
#include "evk/latency.hpp"
#include "evk/pipeline.hpp"
#include "evk/repr.hpp"
