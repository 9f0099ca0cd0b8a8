#pragma once

#include "maps/core.hpp"
#include "maps/motor_model.hpp"
#include "maps/ident.hpp"
#include "maps/estimation.hpp"
#include "maps/control.hpp"
#include "maps/stability.hpp"
#include "maps/config.hpp"
#include "maps/harness.hpp"
