#include <iostream>

#include "nbody/cli.hpp"

int main(int argc, char** argv) {
    return nbody::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
