#pragma once

#include "ttamen/error.hpp"
#include "ttamen/core.hpp"
#include "ttamen/linalg.hpp"
#include "ttamen/ortho.hpp"
#include "ttamen/algebra.hpp"
#include "ttamen/qtt.hpp"
#include "ttamen/amen/config.hpp"
#include "ttamen/amen/environments.hpp"
#include "ttamen/amen/local_solver.hpp"
#include "ttamen/amen/enrichment.hpp"
#include "ttamen/amen/solver.hpp"
#include "ttamen/problems.hpp"
#include "ttamen/diagnostics.hpp"
#include "ttamen/checks.hpp"
#include "ttamen/io.hpp"
#include "ttamen/experiment.hpp"
