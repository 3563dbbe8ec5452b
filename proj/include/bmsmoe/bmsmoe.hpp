#pragma once

#include "bmsmoe/assessment.hpp"
#include "bmsmoe/block_matching.hpp"
#include "bmsmoe/errors.hpp"
#include "bmsmoe/fitting.hpp"
#include "bmsmoe/image.hpp"
#include "bmsmoe/image_io.hpp"
#include "bmsmoe/phantom.hpp"
#include "bmsmoe/pipeline.hpp"
#include "bmsmoe/run_config.hpp"
#include "bmsmoe/smoe.hpp"
