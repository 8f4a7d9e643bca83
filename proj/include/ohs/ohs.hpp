// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ohs/assignment.hpp"
#include "ohs/codec.hpp"
#include "ohs/config.hpp"
#include "ohs/error.hpp"
#include "ohs/evaluator.hpp"
#include "ohs/geometry.hpp"
#include "ohs/inference.hpp"
#include "ohs/io.hpp"
#include "ohs/loss.hpp"
#include "ohs/parallel.hpp"
#include "ohs/synthetic.hpp"
#include "ohs/voxelizer.hpp"
