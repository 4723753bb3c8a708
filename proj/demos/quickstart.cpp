// Train the toy configuration on the synthetic corpus and print the report.
// Usage: quickstart [alpha] [steps]

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "spluad/train/experiment.hpp"

using namespace spluad;

int main(int argc, char** argv) {
  train::ExperimentConfig c;
  c.synth.alpha = argc > 1 ? std::atof(argv[1]) : 0.8;
  c.train.steps = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 300;
  c.train.seed = 7;

  const auto split = train::load_split(c);
  std::printf("train %zu / eval %zu samples, alpha %.2f\n", split.train.size(), split.eval.size(), c.synth.alpha);

  const auto r = train::run_experiment(c, split, &std::cout);
  std::fputs(metrics::format_report("toy", *r.training.summary).c_str(), stdout);
  std::printf("backbone checksum unchanged: %s\n",
              r.training.backbone_checksum_before == r.training.backbone_checksum_after ? "yes" : "no");
}
