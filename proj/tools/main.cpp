#include <iostream>
#include <string>
#include <vector>

#include "probshift/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return probshift::run_cli(args, std::cout, std::cerr);
}
