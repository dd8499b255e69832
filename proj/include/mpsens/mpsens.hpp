#ifndef MPSENS_MPSENS_HPP
#define MPSENS_MPSENS_HPP

#include "error.hpp"
#include "num_core.hpp"
#include "partitions.hpp"
#include "pattern_entropy.hpp"
#include "random.hpp"
#include "sensitivity.hpp"
#include "systems.hpp"

#endif // MPSENS_MPSENS_HPP
