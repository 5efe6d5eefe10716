#pragma once

// Umbrella header for the event-stream simulator and codec library.

#include "evstream/errors.hpp"
#include "evstream/events.hpp"
#include "evstream/metrics.hpp"
#include "evstream/netsim.hpp"
#include "evstream/partition.hpp"
#include "evstream/relay.hpp"
#include "evstream/rng.hpp"
#include "evstream/scenario.hpp"
#include "evstream/subscriber.hpp"
#include "evstream/types.hpp"
#include "evstream/wire.hpp"
