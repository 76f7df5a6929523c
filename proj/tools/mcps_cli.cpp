#include <iostream>

#include "mcps/harness.hpp"

int main(int argc, char** argv) { return mcps::cli_main(argc, argv, std::cout, std::cerr); }
