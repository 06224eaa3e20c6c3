#pragma once

#include "kinhom/errors.hpp"
#include "kinhom/grids.hpp"
#include "kinhom/kernel.hpp"
#include "kinhom/collision.hpp"
#include "kinhom/cell_transport.hpp"
#include "kinhom/effective.hpp"
#include "kinhom/fit.hpp"
#include "kinhom/macro.hpp"
#include "kinhom/transport.hpp"
#include "kinhom/config.hpp"
#include "kinhom/serialize.hpp"
#include "kinhom/harness.hpp"
#include "kinhom/checks.hpp"
