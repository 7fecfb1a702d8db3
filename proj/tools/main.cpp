#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gcm::run_cli(argc, argv, std::cout, std::cerr); }
