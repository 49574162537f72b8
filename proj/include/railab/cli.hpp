#pragma once

namespace railab {

// The whole command-line surface, callable from tests. Returns the process
// exit code: 0 success, 1 validation failure (bad flags, bad config, bad
// input files), 2 runtime fault.
int cli_main(int argc, const char* const* argv);

}  // namespace railab
