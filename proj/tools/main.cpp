#include <cstdlib>
#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    return rpf::cli::run(argc, argv, std::cout, std::cerr, [](char const* name) { return std::getenv(name); });
}
