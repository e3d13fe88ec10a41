// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/tensor.hpp"

#include <algorithm>

namespace shardlm {

std::uint32_t argmax(std::span<const float> x) {
  if (x.empty()) throw ArgumentError("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return static_cast<std::uint32_t>(best);
}

std::vector<Candidate> topk(std::span<const float> x, std::size_t k, std::uint32_t index_offset) {
  if (k == 0 || k > x.size()) {
    throw ArgumentError("topk: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(x.size()) + "]");
  }
  std::vector<Candidate> all(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    all[i] = Candidate{static_cast<std::uint32_t>(i + index_offset), x[i]};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    ranks_before);
  all.resize(k);
  return all;
}

}  // namespace shardlm
