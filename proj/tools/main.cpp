#include <iostream>

#include "gazemine/cli.hpp"

int main(int argc, char** argv) { return gazemine::run_cli(argc, argv, std::cout, std::cerr); }
