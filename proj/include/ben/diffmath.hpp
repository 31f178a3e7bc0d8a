#pragma once

#include "ben/diffmath/tensor.hpp"
#include "ben/diffmath/param_store.hpp"
#include "ben/diffmath/tape.hpp"
#include "ben/diffmath/ops.hpp"
