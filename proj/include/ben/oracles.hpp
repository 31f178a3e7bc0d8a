#pragma once

#include "ben/oracles/tiger_oracles.hpp"
