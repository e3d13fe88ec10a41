// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "shardlm/bench.hpp"

int main(int argc, char** argv) { return shardlm::cli_main(argc, argv, std::cout, std::cerr); }
