#include <iostream>

#include "malpoison/cli.hpp"

int main(int argc, char** argv) { return malpoison::run_cli(argc, argv, std::cout, std::cerr); }
