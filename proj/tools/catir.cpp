#include <iostream>

#include "cat/cli.hpp"

int main(int argc, char** argv) { return cat::cli_main(argc, argv, std::cout, std::cerr); }
