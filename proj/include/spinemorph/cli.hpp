#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spinemorph {

/// Entry point of the `spinemorph` tool; `args` excludes the program name.
/// Returns 0 on success, 2 when measure recorded per-vertebra failures and
/// 1 on any top-level error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spinemorph
