#pragma once

// Umbrella header for the whole workbench.

#include "mdrl/adam.hpp"
#include "mdrl/cg.hpp"
#include "mdrl/common.hpp"
#include "mdrl/config_file.hpp"
#include "mdrl/corpus.hpp"
#include "mdrl/dialog.hpp"
#include "mdrl/domain.hpp"
#include "mdrl/dst.hpp"
#include "mdrl/env.hpp"
#include "mdrl/experiment.hpp"
#include "mdrl/gae.hpp"
#include "mdrl/kb.hpp"
#include "mdrl/metrics.hpp"
#include "mdrl/nlg.hpp"
#include "mdrl/nn.hpp"
#include "mdrl/param_vector.hpp"
#include "mdrl/policy_net.hpp"
#include "mdrl/rollout.hpp"
#include "mdrl/rule_policy.hpp"
#include "mdrl/trpo.hpp"
#include "mdrl/vecmath.hpp"
