#include "eegmtl/cli.hpp"

int main(int argc, char** argv) { return eegmtl::run_cli(argc, argv); }
