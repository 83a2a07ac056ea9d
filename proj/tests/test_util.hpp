#pragma once

#include "qcfg/instances.hpp"

namespace qcfg::testing {
using namespace qcfg::synth;
}  // namespace qcfg::testing
