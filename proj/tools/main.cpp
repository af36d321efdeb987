#include <iostream>

#include "csent/cli.hpp"

int main(int argc, char** argv) { return csent::run_cli(argc, argv, std::cout, std::cerr); }
