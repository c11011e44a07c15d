#include <iostream>

#include "dgcw_cli/commands.hpp"

int main(int argc, char** argv) { return dgcw::cli::run_cli(argc, argv, std::cout, std::cerr); }
