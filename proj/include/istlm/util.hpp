#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace istlm {

// Shortest round-trippable decimal rendering; "nan"/"inf" for non-finite values.
std::string FormatReal(double value);

// Whole-file helpers. Both throw DataError on I/O failure.
std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, std::string_view contents);

std::vector<std::string> SplitString(std::string_view text, char sep);

// Runs body(i) for i in [0, count) on up to `threads` workers. Work is handed
// out in index order; callers must write results into per-index slots so the
// outcome does not depend on the thread count.
void ParallelFor(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace istlm
