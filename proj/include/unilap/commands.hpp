#pragma once

#include <cstddef>

#include "unilap/run_config.hpp"

namespace unilap::cli {

// Command implementations behind the CLI subcommands. Each reads its
// inputs from the previous command's outputs under config.output_dir and
// writes deterministic files; wall-clock data goes only to the
// run_meta.json sidecar.

void cmd_prepare(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_predict(const RunConfig& config);
// Returns the number of completions actually served by the backend
// (cache hits excluded).
std::size_t cmd_reason(const RunConfig& config);
void cmd_eval(const RunConfig& config);
std::size_t cmd_pipeline(const RunConfig& config);

}  // namespace unilap::cli
