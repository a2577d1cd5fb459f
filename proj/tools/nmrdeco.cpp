#include "cli.hpp"

int main(int argc, char** argv) { return nmrdeco::cli::run(argc, argv); }
