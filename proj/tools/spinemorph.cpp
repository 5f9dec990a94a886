#include <iostream>

#include "spinemorph/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return spinemorph::run_cli(args, std::cout, std::cerr);
}
