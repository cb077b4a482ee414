#include "pscore/cli.hpp"

int main(int argc, char** argv) {
    return pscore::run(std::vector<std::string>(argv + 1, argv + argc));
}
