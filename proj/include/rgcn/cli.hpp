#pragma once

#include <string>
#include <vector>

namespace rgcn {

/// Entry point behind the `rgcn` binary, exposed so tests can drive the tool
/// in-process. `args` excludes the program name: args[0] is the subcommand
/// (build-graph, corrupt, decompose, train, eval, gradcheck, synth), followed
/// by an optional config-file path and any number of `--key value` overrides.
/// Flags beat the config file; the RGCN_SEED environment variable beats both.
/// Every successful run writes a fully-resolved `<out>.config` next to its
/// outputs that reproduces the run when fed back in as the config file.
///
/// Returns the process exit code: 0 on success, 2 on configuration or usage
/// errors, 3 on numerical failure (divergence, failed gradient check).
int cli_run(const std::vector<std::string>& args);

}  // namespace rgcn
