#pragma once

#include "ben/benmodel/aleatoric.hpp"
#include "ben/benmodel/bellman.hpp"
#include "ben/benmodel/elbo.hpp"
#include "ben/benmodel/epistemic.hpp"
#include "ben/benmodel/history.hpp"
#include "ben/benmodel/prior.hpp"
#include "ben/benmodel/pushforward.hpp"
