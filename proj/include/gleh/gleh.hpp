#pragma once

#include "gleh/errors.hpp"
#include "gleh/matrixlab.hpp"
#include "gleh/expr.hpp"
#include "gleh/model.hpp"
#include "gleh/markovianize.hpp"
#include "gleh/homogenize.hpp"
#include "gleh/simulate.hpp"
#include "gleh/thermophoresis.hpp"
#include "gleh/bathsim.hpp"
#include "gleh/model_file.hpp"
#include "gleh/io.hpp"
#include "gleh/experiments.hpp"
