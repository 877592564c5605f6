#pragma once

#include "xbart/config.hpp"
#include "xbart/criterion.hpp"
#include "xbart/dataset.hpp"
#include "xbart/dgp.hpp"
#include "xbart/error.hpp"
#include "xbart/grower.hpp"
#include "xbart/io.hpp"
#include "xbart/mh.hpp"
#include "xbart/presort.hpp"
#include "xbart/random.hpp"
#include "xbart/sampler.hpp"
#include "xbart/tree.hpp"
