#include <iostream>

#include "covi/cli.hpp"

int main(int argc, char** argv) { return covi::cli::run(argc, argv, std::cout, std::cerr); }
