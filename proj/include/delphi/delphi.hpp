#pragma once

// Umbrella header for the Delphi elicitation engine and evaluation harness.

#include "delphi/benchdata.hpp"
#include "delphi/cli.hpp"
#include "delphi/config.hpp"
#include "delphi/core.hpp"
#include "delphi/errors.hpp"
#include "delphi/experiments.hpp"
#include "delphi/metrics.hpp"
#include "delphi/personas.hpp"
#include "delphi/prompts.hpp"
#include "delphi/protocol.hpp"
#include "delphi/providers.hpp"
#include "delphi/util.hpp"
