#pragma once

#include "splatcher/config.hpp"
#include "splatcher/error.hpp"
#include "splatcher/fixture.hpp"
#include "splatcher/ingest.hpp"
#include "splatcher/mempool.hpp"
#include "splatcher/model.hpp"
#include "splatcher/parallel.hpp"
#include "splatcher/pipeline.hpp"
#include "splatcher/preprocess.hpp"
#include "splatcher/raster.hpp"
#include "splatcher/render.hpp"
