#include <iostream>

#include "mstest/cli.hpp"

int main(int argc, char** argv) { return mstest::run_cli(argc, argv, std::cout, std::cerr); }
