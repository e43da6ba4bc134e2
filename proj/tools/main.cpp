#include "sloc/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return sloc::run_cli(argc, argv, std::cout, std::cerr); }
