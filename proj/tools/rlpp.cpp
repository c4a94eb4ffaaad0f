#include <iostream>

#include "rlpp/cli.hpp"

int main(int argc, char** argv) { return rlpp::cli::run(argc, argv, std::cout, std::cerr); }
