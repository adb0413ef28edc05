#pragma once

// Everything except the HTTP service, which pulls in the socket layer.
#include "error.hpp"
#include "graph.hpp"
#include "solver.hpp"
#include "oracle.hpp"
#include "reduction.hpp"
#include "interventions.hpp"
#include "io.hpp"
#include "api.hpp"
