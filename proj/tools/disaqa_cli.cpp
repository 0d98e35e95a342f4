// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "disaqa/cli.hpp"

int main(int argc, char** argv) { return disaqa::cli::run(argc, argv, std::cout, std::cerr); }
