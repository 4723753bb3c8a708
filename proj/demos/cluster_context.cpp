// Shows the spoof-aware context: clusters the class description embeddings
// of a frozen encoder and prints which descriptions share a context token.

#include <cstdio>

#include "spluad/train/experiment.hpp"

using namespace spluad;

int main() {
  train::ExperimentConfig c;
  const auto m = train::build_model(c);
  std::fputs(prompt::context_report(m.model->bank(), m.model->descriptions()).c_str(), stdout);
}
