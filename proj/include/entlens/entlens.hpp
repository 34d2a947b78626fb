#pragma once

#include "entlens/claims.hpp"
#include "entlens/diagnostics.hpp"
#include "entlens/entropy.hpp"
#include "entlens/error.hpp"
#include "entlens/interventions.hpp"
#include "entlens/lens.hpp"
#include "entlens/profiles.hpp"
#include "entlens/tensor_store.hpp"
#include "entlens/toy_model.hpp"
