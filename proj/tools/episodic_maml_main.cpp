#include "episodic_maml/cli.hpp"

int main(int argc, char** argv) { return episodic_maml::run_cli(argc, argv); }
