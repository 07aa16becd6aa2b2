// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "corematch/error.hpp"

namespace corematch::cli {

enum ExitCode : int {
    kExitPass = 0,
    kExitValidationFail = 2,
    kExitInvalidParam = 3,
    kExitIo = 4,
    kExitInternal = 5,
};

int exit_code_for(ErrorKind kind);

/// Entry point shared by the binary and the tests. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_main(int argc, char** argv);

}  // namespace corematch::cli
