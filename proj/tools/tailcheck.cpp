#include <iostream>

#include "tailcheck/cli.hpp"

int main(int argc, char** argv) { return tailcheck::cli::run(argc, argv, std::cout, std::cerr); }
