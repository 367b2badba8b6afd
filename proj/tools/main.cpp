#include <string>
#include <vector>

#include "tacit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return tacit::cli::dispatch(args);
}
