#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return casekit::cli::dispatch(argc, argv, std::cout, std::cerr); }
