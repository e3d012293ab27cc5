#include "eaekit/cli.hpp"

int main(int argc, char** argv) { return eaekit::cli::run_main(argc, argv); }
