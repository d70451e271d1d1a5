#include <iostream>

#include "hrssr/cli.hpp"

int main(int argc, char** argv) { return hrssr::cli::run(argc, argv, std::cout, std::cerr); }
