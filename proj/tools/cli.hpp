#pragma once

namespace mplp {
int run_cli(int argc, char** argv);
}
