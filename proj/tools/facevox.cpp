#include <iostream>

#include "facevox/cli/commands.hpp"

int main(int argc, char** argv) { return facevox::cli::run(argc, argv, std::cout, std::cerr); }
