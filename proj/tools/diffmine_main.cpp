#include "diffmine/pipeline.hpp"

int main(int argc, char** argv) { return diffmine::run_cli(argc, argv); }
