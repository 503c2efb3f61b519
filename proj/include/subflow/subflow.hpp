#pragma once

#include "subflow/derivation.hpp"
#include "subflow/dspace.hpp"
#include "subflow/errors.hpp"
#include "subflow/expr.hpp"
#include "subflow/flow.hpp"
#include "subflow/io.hpp"
#include "subflow/ode.hpp"
#include "subflow/quadrature.hpp"
