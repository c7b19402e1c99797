#pragma once

#include "critprop/activation.hpp"
#include "critprop/criticality.hpp"
#include "critprop/data.hpp"
#include "critprop/errors.hpp"
#include "critprop/meanfield.hpp"
#include "critprop/propagator.hpp"
#include "critprop/quadrature.hpp"
#include "critprop/random.hpp"
#include "critprop/trainer.hpp"
