#pragma once

namespace ldpp {

// Entry point behind the `ldpp` binary. Maps ValidationError to exit code 1
// and RuntimeFailure (plus anything unexpected) to 2.
int run_cli(int argc, const char* const* argv);

}  // namespace ldpp
