#ifndef CORRBOOT_CORRBOOT_HPP
#define CORRBOOT_CORRBOOT_HPP

#include "corrboot/distributions.hpp"
#include "corrboot/errors.hpp"
#include "corrboot/estimators.hpp"
#include "corrboot/harness.hpp"
#include "corrboot/intervals.hpp"
#include "corrboot/normal.hpp"
#include "corrboot/parallel.hpp"
#include "corrboot/resampling.hpp"
#include "corrboot/rng.hpp"
#include "corrboot/sample.hpp"

#endif
