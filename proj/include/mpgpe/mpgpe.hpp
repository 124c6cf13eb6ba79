#pragma once

#include "env.hpp"
#include "estimators.hpp"
#include "gp.hpp"
#include "io.hpp"
#include "lscde.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "trainer.hpp"
#include "types.hpp"
