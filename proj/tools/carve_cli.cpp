#include <iostream>
#include <string>
#include <vector>

#include "carve/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return carve::run_cli(args, std::cout, std::cerr);
}
