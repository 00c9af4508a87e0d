#include "belief/cli_io.hpp"

#include <iostream>

int main(int argc, char **argv) { return belief::cli_dispatch(argc, argv, std::cout, std::cerr); }
