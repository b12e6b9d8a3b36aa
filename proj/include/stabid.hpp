#pragma once

// Umbrella header. File I/O lives in stabid/io.hpp (needs nlohmann/json).

#include "stabid/barrier.hpp"
#include "stabid/bench.hpp"
#include "stabid/constraints.hpp"
#include "stabid/datagen.hpp"
#include "stabid/error.hpp"
#include "stabid/fitters.hpp"
#include "stabid/ipm.hpp"
#include "stabid/lagrangian.hpp"
#include "stabid/linalg.hpp"
#include "stabid/models.hpp"
#include "stabid/newton.hpp"
#include "stabid/polyalg.hpp"
#include "stabid/stability.hpp"
