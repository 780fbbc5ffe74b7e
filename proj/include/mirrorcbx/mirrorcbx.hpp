#pragma once

#include "mirrorcbx/baselines.hpp"
#include "mirrorcbx/core.hpp"
#include "mirrorcbx/diagnostics.hpp"
#include "mirrorcbx/dynamics.hpp"
#include "mirrorcbx/mirror_maps.hpp"
#include "mirrorcbx/objectives.hpp"
#include "mirrorcbx/optimizer.hpp"
#include "mirrorcbx/variants.hpp"
