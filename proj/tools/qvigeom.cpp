#include "qvigeom/cli.hpp"

int main(int argc, char** argv) { return qvigeom::run_cli(argc, argv); }
