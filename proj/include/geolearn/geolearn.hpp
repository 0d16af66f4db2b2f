#pragma once

#include "geolearn/error.hpp"
#include "geolearn/evolution.hpp"
#include "geolearn/fokker_planck.hpp"
#include "geolearn/grid.hpp"
#include "geolearn/landscape.hpp"
#include "geolearn/langevin.hpp"
#include "geolearn/optimizer.hpp"
#include "geolearn/quantum.hpp"
#include "geolearn/rng.hpp"
#include "geolearn/spd.hpp"
#include "geolearn/stats.hpp"
#include "geolearn/tridiagonal.hpp"
