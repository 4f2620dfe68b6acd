#include "cli.hpp"

int main(int argc, char** argv) { return mplp::run_cli(argc, argv); }
