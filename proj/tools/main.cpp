#include <iostream>

#include "xattn/cli.hpp"

int main(int argc, char** argv) { return xattn::cli::run(argc, argv, std::cout, std::cerr); }
