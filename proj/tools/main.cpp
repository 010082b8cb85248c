#include "flowscape/harness.hpp"

int main(int argc, char** argv) { return flowscape::cli_main(argc, argv); }
