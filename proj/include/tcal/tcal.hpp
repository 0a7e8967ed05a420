#pragma once

#include "tcal/bench.hpp"
#include "tcal/calibrate.hpp"
#include "tcal/core.hpp"
#include "tcal/dataset.hpp"
#include "tcal/model.hpp"
#include "tcal/serialize.hpp"
#include "tcal/simulate.hpp"
