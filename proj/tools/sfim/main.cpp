#include <iostream>

#include "sfim/cli/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return sfim::cli::run(args, std::cout, std::cerr);
}
