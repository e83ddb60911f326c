#pragma once

#include "fourwire/case_io.hpp"
#include "fourwire/curve.hpp"
#include "fourwire/inverter.hpp"
#include "fourwire/ipm.hpp"
#include "fourwire/netmodel.hpp"
#include "fourwire/network.hpp"
#include "fourwire/newton.hpp"
#include "fourwire/nlp.hpp"
#include "fourwire/phasor.hpp"
#include "fourwire/results.hpp"
#include "fourwire/scenario.hpp"
