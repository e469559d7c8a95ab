#pragma once

#include "phrom/deim.hpp"
#include "phrom/errors.hpp"
#include "phrom/experiment.hpp"
#include "phrom/inputs.hpp"
#include "phrom/integrator.hpp"
#include "phrom/linalg.hpp"
#include "phrom/matio.hpp"
#include "phrom/metrics.hpp"
#include "phrom/models.hpp"
#include "phrom/opinf.hpp"
#include "phrom/pod.hpp"
#include "phrom/rom.hpp"
#include "phrom/snapshots.hpp"
#include "phrom/types.hpp"
