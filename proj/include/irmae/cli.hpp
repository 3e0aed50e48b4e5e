#pragma once

namespace irmae {

// Full command-line surface: train, spectrum, sample, interpolate, pca,
// sweep, ablate, classify. Returns 0 on success, 2 for usage errors (with
// usage text), 1 for runtime failures (one-line "error: ..." on stderr).
int run_cli(int argc, const char* const* argv);

}  // namespace irmae
