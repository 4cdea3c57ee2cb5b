#pragma once

#include "godngod/breeder.hpp"
#include "godngod/catalog.hpp"
#include "godngod/error.hpp"
#include "godngod/intelligence.hpp"
#include "godngod/machine.hpp"
#include "godngod/orchestrator.hpp"
#include "godngod/rng.hpp"
#include "godngod/service.hpp"
#include "godngod/util.hpp"
