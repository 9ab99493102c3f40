#include <iostream>

#include "ddlasso/cli.hpp"

int main(int argc, char** argv) { return ddlasso::cli::run(argc, argv, std::cout, std::cerr); }
