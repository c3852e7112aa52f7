#pragma once

#include "gpvine/bicop.hpp"
#include "gpvine/data.hpp"
#include "gpvine/empirics.hpp"
#include "gpvine/errors.hpp"
#include "gpvine/gp/ep.hpp"
#include "gpvine/gp/fitc.hpp"
#include "gpvine/gp/gp_copula.hpp"
#include "gpvine/gp/kernel.hpp"
#include "gpvine/mll.hpp"
#include "gpvine/serialization.hpp"
#include "gpvine/stats.hpp"
#include "gpvine/vine/structure.hpp"
#include "gpvine/vine/vine.hpp"
#include "gpvine/wilcoxon.hpp"
