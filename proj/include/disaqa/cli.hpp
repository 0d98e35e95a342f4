// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace disaqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Subcommands: gen-data, train, eval, predict, count-params, grad-check.
// Reports go to --out when given, otherwise to `out`; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace disaqa::cli
