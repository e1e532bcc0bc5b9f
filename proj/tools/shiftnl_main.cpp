// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "shiftnl/cli.hpp"

int main(int argc, char** argv) { return shiftnl::run_cli(argc, argv, std::cout, std::cerr); }
