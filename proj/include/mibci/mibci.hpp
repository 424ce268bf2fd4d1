#pragma once

#include "mibci/core.hpp"
#include "mibci/rng.hpp"
#include "mibci/parallel.hpp"
#include "mibci/dataset.hpp"
#include "mibci/dsp.hpp"
#include "mibci/spd.hpp"
#include "mibci/csp.hpp"
#include "mibci/riemann.hpp"
#include "mibci/svm.hpp"
#include "mibci/config.hpp"
#include "mibci/pipeline.hpp"
#include "mibci/model_io.hpp"
