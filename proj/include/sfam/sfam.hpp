#pragma once

#include "sfam/tensor.hpp"
#include "sfam/cis.hpp"
#include "sfam/activation_map.hpp"
#include "sfam/baselines.hpp"
#include "sfam/localization.hpp"
#include "sfam/sanity.hpp"
#include "sfam/npy.hpp"
#include "sfam/manifest.hpp"
#include "sfam/image.hpp"
#include "sfam/commands.hpp"
