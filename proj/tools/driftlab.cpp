#include "driftlab/report/cli.hpp"

int main(int argc, char** argv) { return driftlab::report::cli_main(argc, argv); }
