#pragma once

#include "hardylab/error.hpp"
#include "hardylab/mesh.hpp"
#include "hardylab/field.hpp"
#include "hardylab/level_set.hpp"
#include "hardylab/operator.hpp"
#include "hardylab/report.hpp"
#include "hardylab/solver.hpp"
#include "hardylab/green.hpp"
#include "hardylab/hardy.hpp"
#include "hardylab/verify.hpp"
#include "hardylab/scenario.hpp"
