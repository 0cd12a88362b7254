#pragma once

// Library modules (no third-party dependencies). The harness headers under
// fsel/harness/ additionally need nlohmann/json and CLI11.
#include "fsel/core/linalg.hpp"
#include "fsel/core/matrix.hpp"
#include "fsel/core/quadrature.hpp"
#include "fsel/core/rng.hpp"
#include "fsel/error.hpp"
#include "fsel/estimator.hpp"
#include "fsel/geometry.hpp"
#include "fsel/loss.hpp"
#include "fsel/model.hpp"
#include "fsel/msdata.hpp"
#include "fsel/representation.hpp"
