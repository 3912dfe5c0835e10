#include <string>
#include <vector>

#include "fect/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return fect::run_cli(args);
}
