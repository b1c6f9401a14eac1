#pragma once

#include "mhecert/analyze.hpp"
#include "mhecert/certify.hpp"
#include "mhecert/error.hpp"
#include "mhecert/estimate.hpp"
#include "mhecert/harness.hpp"
#include "mhecert/io.hpp"
#include "mhecert/linalg.hpp"
#include "mhecert/model.hpp"
#include "mhecert/random.hpp"
#include "mhecert/sdp.hpp"
