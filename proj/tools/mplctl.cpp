#include "mpl/cli.hpp"

int main(int argc, char** argv) { return mpl::run_cli(argc, argv); }
