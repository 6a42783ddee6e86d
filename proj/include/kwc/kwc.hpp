#pragma once

#include "errors.hpp"
#include "functions.hpp"
#include "grid.hpp"
#include "tridiag.hpp"
#include "model.hpp"
#include "state_solver.hpp"
#include "linear_p.hpp"
#include "adjoint.hpp"
#include "optimizer.hpp"
#include "config.hpp"
