#pragma once

#include "omcool/barycentric.hpp"
#include "omcool/collocation.hpp"
#include "omcool/integrate.hpp"
#include "omcool/mintime.hpp"
#include "omcool/model.hpp"
#include "omcool/nlp.hpp"
#include "omcool/reachability.hpp"
