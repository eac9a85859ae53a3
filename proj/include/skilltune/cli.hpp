#pragma once

#include <memory>

#include "skilltune/pipeline.hpp"

namespace skilltune {

/// Entry point of the command-line tool. Returns 0 on success, 1 on a fatal
/// error and 2 on invalid arguments.
int cli_main(int argc, const char* const* argv, const PipelineHooks& hooks = {});

}  // namespace skilltune
