#pragma once

#include "ben/netblocks/mlp.hpp"
#include "ben/netblocks/gru.hpp"
#include "ben/netblocks/qnet.hpp"
