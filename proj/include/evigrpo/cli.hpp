#pragma once

// Single-entry command line: gen-data, train, eval, ablate, annotate,
// check-rewards, grad-check. Every subcommand takes --seed, --out, and --psf
// and writes its outputs under --out with stable filenames. --config names a
// key=value file whose keys live under a [subcommand] section; explicit flags
// win, and the flag may appear before or after the subcommand name. Exit
// codes: 0 success, 1 usage error, 2 runtime error (structured JSON message
// on stderr).

namespace evigrpo {

int dispatch(int argc, const char* const* argv);

}  // namespace evigrpo
