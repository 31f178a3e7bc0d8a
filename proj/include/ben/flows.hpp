#pragma once

#include "ben/flows/param_source.hpp"
#include "ben/flows/layers.hpp"
#include "ben/flows/stack.hpp"
