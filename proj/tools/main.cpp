#include <iostream>

#include "migt/cli.hpp"

int main(int argc, char** argv) { return migt::cli::run(argc, argv, std::cout, std::cerr); }
