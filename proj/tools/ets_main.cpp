#include <iostream>

#include "ets/cli.hpp"

int main(int argc, char** argv) { return ets::run_cli(argc, argv, std::cout, std::cerr); }
