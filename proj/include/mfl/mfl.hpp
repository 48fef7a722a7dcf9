#pragma once

#include "mfl/grid.hpp"
#include "mfl/fourier.hpp"
#include "mfl/measures.hpp"
#include "mfl/kernel.hpp"
#include "mfl/spectral.hpp"
#include "mfl/equilibrium.hpp"
#include "mfl/dynamics.hpp"
#include "mfl/analysis.hpp"
