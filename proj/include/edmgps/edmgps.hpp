#pragma once

#include "edmgps/consistency.hpp"
#include "edmgps/edm_core.hpp"
#include "edmgps/error.hpp"
#include "edmgps/position.hpp"
#include "edmgps/rng.hpp"
#include "edmgps/root_finding.hpp"
#include "edmgps/solve_report.hpp"
#include "edmgps/solver_general.hpp"
#include "edmgps/solver_n4.hpp"
