#include <iostream>

#include "cli/dispatch.hpp"
#include "cli/run_config.hpp"

int main(int argc, char** argv) {
  auto parsed = fusionest::cli::parse_config(argc, argv, std::cout, std::cerr);
  if (!parsed.config) return parsed.exit_code;
  return fusionest::cli::dispatch(*parsed.config, std::cout, std::cerr);
}
