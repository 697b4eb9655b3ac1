#include "relurec/harness.hpp"

int main(int argc, char** argv) { return relurec::cli_main(argc, argv); }
