// One line per end-to-end criterion; exit status is nonzero if any fails.
#include <iostream>

#include "cat/checks.hpp"

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  return cat::checks::run_checks(filter, std::cout) ? 0 : 1;
}
