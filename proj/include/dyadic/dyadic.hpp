#ifndef DYADIC_DYADIC_HPP
#define DYADIC_DYADIC_HPP

#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"
#include "kernel.hpp"
#include "shift.hpp"
#include "carleson.hpp"
#include "paraproduct.hpp"
#include "representation.hpp"
#include "certify.hpp"
#include "experiment.hpp"

#endif // DYADIC_DYADIC_HPP
