// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/cli.hpp"

int main(int argc, char** argv) { return corematch::cli::run_main(argc, argv); }
