#pragma once

#include "texsyn/error.hpp"
#include "texsyn/gram.hpp"
#include "texsyn/image.hpp"
#include "texsyn/network.hpp"
#include "texsyn/objective.hpp"
#include "texsyn/optimizer.hpp"
#include "texsyn/parallel.hpp"
#include "texsyn/pipeline.hpp"
#include "texsyn/rng.hpp"
#include "texsyn/schedule.hpp"
#include "texsyn/tensor.hpp"
#include "texsyn/weights.hpp"
