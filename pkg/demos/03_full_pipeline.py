"""
The whole pipeline through the command line
===========================================

Every experiment is a `popbench` subcommand reading one flat TOML config.
Here the synthetic config is shrunk (few iterations, small ensembles) and
each command is run in turn; the results directory ends up holding the CSVs,
summary.json and SVG charts.
"""

import json
import tempfile
from pathlib import Path

from popbench.cli import main

work = Path(tempfile.mkdtemp(prefix="popbench-pipeline-"))
main(["synth", "--out", str(work), "--seed", "5"])

conf = work / "config.toml"
text = conf.read_text().replace("n_iterations = 100", "n_iterations = 5")
text = "\n".join(l for l in text.splitlines() if not l.startswith(("ablation_embedding", "ablation_covariate")))
conf.write_text(text + "\nrf_n_trees = 60\ngbt_rounds = 60\n"
                "ablation_embedding_counts = [1, 4, 16]\nablation_covariate_counts = [1, 6, 23]\n")

main(["validate", "--config", str(conf)])
for cmd in ("link", "benchmark", "importance", "ablate", "transfer", "sensitivity"):
    code = main([cmd, "--config", str(conf)])
    print(f"popbench {cmd}: exit {code}")

out = work / "out"
print(sorted(p.name for p in out.iterdir()))
print(sorted(p.name for p in (out / "charts").iterdir()))

summary = json.loads((out / "summary.json").read_text())
for row in summary["benchmark"]:
    if row["metric"] == "r2":
        print(f'{row["model"]:17s} {row["family"]:10s} R² median {row["median"]:.3f} '
              f'IQR [{row["q25"]:.3f}, {row["q75"]:.3f}]')

# the transferability regressions: per-region ΔR²/ΔKL against region descriptors
print((out / "ols.csv").read_text())
