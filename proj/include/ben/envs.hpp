#pragma once

#include "ben/envs/cmdp.hpp"
#include "ben/envs/tiger.hpp"
#include "ben/envs/search_rescue.hpp"
