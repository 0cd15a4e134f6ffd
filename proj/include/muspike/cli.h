/**
 * @file cli.h
 * @brief `muspike` command-line entry point.
 *
 * Exit codes: 0 success, 1 domain error (module error name printed verbatim),
 * 2 usage error. Progress goes to `err`, data to files or `out`.
 */
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace muspike::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace muspike::cli
