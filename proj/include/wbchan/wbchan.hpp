#pragma once

#include "wbchan/bits.hpp"
#include "wbchan/calibration.hpp"
#include "wbchan/codec.hpp"
#include "wbchan/error.hpp"
#include "wbchan/medium.hpp"
#include "wbchan/metrics.hpp"
#include "wbchan/prng.hpp"
#include "wbchan/protocols.hpp"
#include "wbchan/strategies.hpp"
#include "wbchan/trace.hpp"
