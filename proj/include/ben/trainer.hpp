#pragma once

#include "ben/trainer/agent.hpp"
#include "ben/trainer/config.hpp"
#include "ben/trainer/metrics.hpp"
#include "ben/trainer/procedures.hpp"
