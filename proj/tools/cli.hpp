#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mvad::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

// Entry point shared by the executable and the tests. args[0] is the program
// name.
int run(const std::vector<std::string>& args);

// Training churns through identically sized buffers every step; keep them
// on the heap instead of returning them to the kernel. No-op off glibc.
void tune_allocator();

// "begin:end:step" (inclusive of end within rounding) or "a,b,c".
std::vector<double> parse_number_list(std::string_view text);

}  // namespace mvad::cli
