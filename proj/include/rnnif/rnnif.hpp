#pragma once

#include "rnnif/checkpoint.hpp"
#include "rnnif/evaluation.hpp"
#include "rnnif/training.hpp"
