#pragma once

#include <ostream>

namespace dualsep {

/// Entry point behind the `dualsep` binary. Subcommands: simulate, separate,
/// eval, bench, spectrogram, init-weights. Returns 0 on success, 1 on invalid
/// input and 2 on file system errors; failures are described on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dualsep
