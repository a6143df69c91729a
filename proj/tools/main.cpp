#include <iostream>

#include "rulesynth/cli.hpp"

int main(int argc, char** argv) { return rulesynth::run_cli(argc, argv, std::cout, std::cerr); }
