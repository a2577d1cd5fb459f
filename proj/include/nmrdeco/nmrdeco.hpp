#pragma once

#include "nmrdeco/errors.hpp"
#include "nmrdeco/spin_core.hpp"
#include "nmrdeco/propagator.hpp"
#include "nmrdeco/nmr_model.hpp"
#include "nmrdeco/sequence.hpp"
#include "nmrdeco/experiments.hpp"
#include "nmrdeco/sinusoid_fit.hpp"
#include "nmrdeco/sweep.hpp"
#include "nmrdeco/io.hpp"
