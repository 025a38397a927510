#include <iostream>

#include "accelmap/cli.hpp"

int main(int argc, char** argv) { return accelmap::cli_main(argc, argv, std::cout, std::cerr); }
