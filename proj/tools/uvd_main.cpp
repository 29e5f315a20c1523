#include <string>
#include <vector>

#include "uvd/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return uvd::run_cli(std::move(args));
}
