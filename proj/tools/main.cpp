#include <iostream>

#include "fplab/cli.hpp"

int main(int argc, char** argv) { return fplab::cli::run(argc, argv, std::cout, std::cerr); }
