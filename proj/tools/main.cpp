#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return ocsvm_cpd::cli::run(argc, argv, std::cout, std::cerr); }
