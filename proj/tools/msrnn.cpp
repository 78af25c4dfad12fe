#include <iostream>

#include "msrnn/cli/commands.hpp"

int main(int argc, char** argv) { return msrnn::cli::run(argc, argv, std::cout, std::cerr); }
