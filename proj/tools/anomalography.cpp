#include <string>
#include <vector>

#include "anomalography/experiment.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return anomalography::experiment::run_cli(args);
}
