#include "mlr/cli.hpp"

int main(int argc, char** argv) {
    return mlr::cli::run(argc, argv);
}
