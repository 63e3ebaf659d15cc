#include "cvp/cli/app.hpp"

int main(int argc, char** argv) { return cvp::cli::run(argc, argv); }
