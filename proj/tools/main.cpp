#include <iostream>

#include "dualsep/cli.hpp"

int main(int argc, char** argv) { return dualsep::run_cli(argc, argv, std::cout, std::cerr); }
