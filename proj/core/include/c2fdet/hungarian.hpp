// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace c2f {

/// Minimum-cost one-to-one assignment for a row-major `rows` x `cols` cost
/// matrix. Returns the assigned column for every row, or -1 for rows left
/// over when rows > cols. min(rows, cols) pairs are always produced.
std::vector<int> solve_assignment(std::span<const double> cost, int rows, int cols);

}  // namespace c2f
