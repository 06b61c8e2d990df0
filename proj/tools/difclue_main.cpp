#include <iostream>

#include "difclue/cli.hpp"

int main(int argc, char** argv) { return difclue::cli_dispatch(argc, argv, std::cout, std::cerr); }
