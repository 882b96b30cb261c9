#pragma once

#include "sparsemp/errors.hpp"
#include "sparsemp/rng.hpp"
#include "sparsemp/parallel.hpp"
#include "sparsemp/io.hpp"
#include "sparsemp/model.hpp"
#include "sparsemp/mplaw.hpp"
#include "sparsemp/spectral.hpp"
#include "sparsemp/locallaw.hpp"
#include "sparsemp/configuration.hpp"
#include "sparsemp/concentration.hpp"
#include "sparsemp/experiment.hpp"
