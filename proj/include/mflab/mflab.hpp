#pragma once

/// Numerical modules. The CLI layer (config, manifests, commands) lives in
/// mflab/cli.hpp and additionally needs OpenSSL.

#include "mflab/error.hpp"
#include "mflab/field.hpp"
#include "mflab/greens.hpp"
#include "mflab/rearrange.hpp"
#include "mflab/bistoch.hpp"
#include "mflab/minimize.hpp"
#include "mflab/exclude.hpp"
#include "mflab/stathydro.hpp"
#include "mflab/simulate.hpp"
