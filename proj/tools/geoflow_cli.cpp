#include "geoflow/run.hpp"

int main(int argc, char** argv) { return geoflow::cli_main(argc, argv); }
