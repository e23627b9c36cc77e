#pragma once

// Everything except the WebSocket service (spark/harness/serve.hpp), which
// needs Boost.

#include "spark/dual.hpp"
#include "spark/force_controller.hpp"
#include "spark/haptics.hpp"
#include "spark/harness/config.hpp"
#include "spark/harness/leader_source.hpp"
#include "spark/harness/report.hpp"
#include "spark/harness/run.hpp"
#include "spark/harness/scenario.hpp"
#include "spark/harness/session.hpp"
#include "spark/harness/variant.hpp"
#include "spark/kinematics.hpp"
#include "spark/link/channel.hpp"
#include "spark/link/leader_hold.hpp"
#include "spark/link/protocol.hpp"
#include "spark/sim_world.hpp"
