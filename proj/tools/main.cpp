#include <iostream>

#include "demo/cli.hpp"

int main(int argc, char** argv) { return demo::run_cli(argc, argv, std::cout, std::cerr); }
