#include <iostream>

#include "hcnf/pipeline/cli.hpp"

int main(int argc, char** argv) { return hcnf::pipeline::cli_main(argc, argv, std::cout, std::cerr); }
