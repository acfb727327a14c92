#include <iostream>

#include "anesi/cli.hpp"

int main(int argc, char** argv) { return anesi::cli::run(argc, argv, std::cout, std::cerr); }
