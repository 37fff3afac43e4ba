// Copyright (c) the minpert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "minpert/errors.hpp"
#include "minpert/harness.hpp"
#include "minpert/linalg.hpp"
#include "minpert/nonlinear.hpp"
#include "minpert/problems.hpp"
#include "minpert/system.hpp"
